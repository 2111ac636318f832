"""Command-line front end.

::

    heavybandits run <config> [--threads N] [--seed S] [--out DIR]
    heavybandits concentration <config> [--seed S] [--out DIR]
    heavybandits klinf <dist-spec> <x> --B B --epsilon EPS
    heavybandits compare <configA> <configB> [--threads N] [--seed S] [--out DIR]

``<config>`` is a path to a JSON file following ``configs/experiment.schema.json``
or the name of a bundled config (``experiment1``, ``experiment2``).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .distributions import (
    DiscreteDist,
    DivergentMomentError,
    EmpiricalDistribution,
    GenParetoParams,
    InfiniteMeanError,
    MomentClass,
    sample_arm,
)
from .klinf import ConvergenceError, InfeasibleTargetError, klinf
from .policies import PolicyConfig, ThresholdKind
from .simulator import (
    BanditInstance,
    ClassMembershipError,
    DegenerateInstanceError,
    binomial_slack,
    deviation_maxima,
    lower_bound_curve,
    run_many,
)

__all__ = ["main", "load_config", "build_instance", "build_policies", "run_from_config"]

BUNDLED = ("experiment1", "experiment2")
FLOAT_FMT = "%.12g"


class ConfigError(ValueError):
    """The configuration file is unreadable or violates the schema."""


# ------------------------------------------------------------------- config


def _schema() -> dict:
    text = resources.files("heavybandits.configs").joinpath("experiment.schema.json").read_text()
    return json.loads(text)


def resolve_config_path(name: str):
    """A filesystem path, or a bundled config by name (with or without ``.json``)."""
    p = Path(name)
    if p.exists():
        return p
    stem = name[:-5] if name.endswith(".json") else name
    if stem in BUNDLED and "/" not in name:
        return resources.files("heavybandits.configs").joinpath(stem + ".json")
    raise ConfigError(f"config not found: {name}")


def load_config(name: str) -> dict:
    """Read and schema-validate a config; raises :class:`ConfigError`."""
    path = resolve_config_path(name)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {name}: {exc}") from exc
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc
    return cfg


def build_dist(spec: dict):
    if spec["type"] == "genpareto":
        return GenParetoParams(spec["mu"], spec["sigma"], spec["zeta"])
    return DiscreteDist(spec["support"], spec["weights"])


def build_class(spec: dict) -> MomentClass:
    return MomentClass(float(spec["B"]), float(spec["epsilon"]))


def build_instance(cfg: dict) -> BanditInstance:
    return BanditInstance([build_dist(a) for a in cfg["arms"]], build_class(cfg["class"]))


def build_policies(cfg: dict) -> List[Tuple[str, PolicyConfig]]:
    """``(label, policy)`` pairs with unique labels."""
    out: List[Tuple[str, PolicyConfig]] = []
    seen: Dict[str, int] = {}
    for p in cfg["policies"]:
        pol = PolicyConfig(
            name=p["name"],
            eta_tilde=p.get("eta_tilde", 0.1),
            threshold=ThresholdKind(p.get("threshold", "main")),
            epsilon1=p.get("epsilon1"),
        )
        label = p.get("label", pol.label())
        if label in seen:
            seen[label] += 1
            label = f"{label}_{seen[label]}"
        else:
            seen[label] = 0
        out.append((label, pol))
    return out


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        return None if not math.isfinite(v) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([FLOAT_FMT % v if isinstance(v, (float, np.floating)) else v for v in row])


# --------------------------------------------------------------- commands


def run_from_config(name: str, *, threads: int = 1, seed: Optional[int] = None,
                    out: Optional[str] = None, log=print) -> dict:
    """Run every policy of a config; write one CSV per policy plus ``summary.json``.

    Returns the summary dictionary.
    """
    cfg = load_config(name)
    instance = build_instance(cfg)
    policies = build_policies(cfg)
    T = cfg["horizon"]
    runs = cfg.get("runs", 1)
    base_seed = cfg.get("base_seed", 0) if seed is None else seed
    out_dir = Path(out or cfg.get("output") or f"results/{cfg.get('name', 'experiment')}")
    out_dir.mkdir(parents=True, exist_ok=True)

    lb_cfg = cfg.get("lower_bound", {})
    lb = None
    if lb_cfg.get("enabled", True):
        lb = lower_bound_curve(instance, T, bounded=lb_cfg.get("bounded", False),
                               proxy_samples=lb_cfg.get("proxy_samples", 100_000),
                               seed=lb_cfg.get("seed", 0),
                               multiplier=lb_cfg.get("multiplier", 1.0))

    summary = {
        "name": cfg.get("name", ""),
        "horizon": T,
        "runs": runs,
        "base_seed": base_seed,
        "means": instance.means,
        "moments": instance.moments,
        "lower_bound": None if lb is None else {
            "constant": lb.constant,
            "multiplier": lb.multiplier,
            "klinf": lb.klinf_values,
            "klinf_stderr": lb.klinf_stderr,
        },
        "policies": {},
    }
    for label, pol in policies:
        start = time.perf_counter()
        res = run_many(instance, pol, T, runs, base_seed, threads=threads)
        wall = time.perf_counter() - start
        lower = lb(res.times) if lb is not None else np.full(len(res.times), math.nan)
        _write_csv(out_dir / f"{label}.csv", ["t", "mean_regret", "std_regret", "lower_bound"],
                   zip(res.times.tolist(), res.mean, res.std, lower))
        finals = np.array([tr.final_regret for tr in res.traces])
        summary["policies"][label] = {
            "policy": pol.name.value,
            "eta_tilde": pol.eta_tilde if pol.batched else 0.0,
            "threshold": pol.effective_threshold(),
            "final_regret_mean": float(finals.mean()),
            "final_regret_std": float(finals.std()),
            "mean_arm_pulls": res.mean_pulls.tolist(),
            "index_evals_mean": res.mean_index_evals,
            "wall_time_s": wall,
            "csv": f"{label}.csv",
        }
        log(f"{label}: final regret {finals.mean():.6g} +- {finals.std():.3g} "
            f"over {runs} runs ({wall:.1f}s)")
    (out_dir / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    log(f"wrote {out_dir}")
    return summary


def concentration_from_config(name: str, *, seed: Optional[int] = None,
                              out: Optional[str] = None, log=print) -> bool:
    """Monte Carlo check of the anytime deviation bound; True when all x pass."""
    cfg = load_config(name)
    sec = cfg.get("concentration")
    if sec is None:
        raise ConfigError("config has no 'concentration' section")
    dist = build_dist(sec["dist"])
    cls = build_class(sec.get("class", cfg["class"]))
    inst = BanditInstance([dist], cls)  # membership check
    del inst
    runs = sec["runs"]
    s = sec.get("seed", 0) if seed is None else seed
    maxima = deviation_maxima(dist, cls, sec["n_max"], runs, s)
    rows = []
    ok = True
    for x in sec["x"]:
        frac = float(np.mean(maxima >= x))
        bound = math.exp(-x)
        slack = binomial_slack(bound, runs)
        passed = frac <= bound + slack
        ok &= passed
        rows.append((float(x), frac, bound, slack, "pass" if passed else "FAIL"))
        log(f"x={x:g}: violation frequency {frac:.5g} vs bound {bound:.5g} (+{slack:.3g}) "
            f"{'pass' if passed else 'FAIL'}")
    out_dir = Path(out or cfg.get("output") or "results")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "concentration.csv", ["x", "violation_fraction", "bound", "slack", "result"], rows)
    return ok


def parse_dist_spec(spec: str, epsilon: float, samples: int = 100_000, seed: int = 0):
    """Parse a one-shot distribution description.

    * ``"1,2,2,5"`` - equally weighted sample points,
    * ``"0:0.5,1:0.5"`` - discrete support with weights,
    * ``"genpareto:MU,SIGMA,ZETA"`` - an i.i.d. sample of size ``samples``,
    * ``"@file.json"`` - a distribution object as in the config ``arms`` list.
    """
    spec = spec.strip()
    if spec.startswith("@"):
        obj = json.loads(Path(spec[1:]).read_text())
        d = build_dist(obj)
        spec_is_gp = isinstance(d, GenParetoParams)
    elif spec.startswith("genpareto:"):
        mu, sigma, zeta = (float(v) for v in spec.split(":", 1)[1].split(","))
        d, spec_is_gp = GenParetoParams(mu, sigma, zeta), True
    elif ":" in spec:
        pairs = [p.split(":") for p in spec.split(",")]
        d = DiscreteDist([float(v) for v, _ in pairs], [float(w) for _, w in pairs])
        spec_is_gp = False
    else:
        return EmpiricalDistribution([float(v) for v in spec.split(",")], epsilon=epsilon)
    if spec_is_gp:
        rng = np.random.default_rng(seed)
        return EmpiricalDistribution(sample_arm(d, rng.random(samples)), epsilon=epsilon)
    return d


def compare_configs(name_a: str, name_b: str, *, threads: int = 1, seed: Optional[int] = None,
                    out: Optional[str] = None, log=print) -> dict:
    """Paired-seed regret ratio of the first policy of config A over that of config B."""
    cfg_a, cfg_b = load_config(name_a), load_config(name_b)
    if cfg_a["horizon"] != cfg_b["horizon"] or len(cfg_a["arms"]) != len(cfg_b["arms"]):
        raise ConfigError("compare needs configs with the same horizon and number of arms")
    T = cfg_a["horizon"]
    runs = cfg_a.get("runs", 1)
    base_seed = cfg_a.get("base_seed", 0) if seed is None else seed
    res = []
    labels = []
    for cfg in (cfg_a, cfg_b):
        inst = build_instance(cfg)
        label, pol = build_policies(cfg)[0]
        labels.append(label)
        res.append(run_many(inst, pol, T, runs, base_seed, threads=threads))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = res[0].mean / res[1].mean
    out_dir = Path(out or "results/compare")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "compare.csv", ["t", "mean_regret_a", "mean_regret_b", "ratio"],
               zip(res[0].times.tolist(), res[0].mean, res[1].mean, ratio))
    summary = {"a": labels[0], "b": labels[1], "horizon": T, "runs": runs, "base_seed": base_seed,
               "final_ratio": float(ratio[-1])}
    (out_dir / "compare.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    log(f"{labels[0]} / {labels[1]} regret ratio at T={T}: {ratio[-1]:.6g}")
    return summary


# --------------------------------------------------------------------- main


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heavybandits",
                                 description="Heavy-tailed bandit simulator with KLinf indices.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, threads=True):
        if threads:
            p.add_argument("--threads", type=int, default=1, help="parallel replications")
        p.add_argument("--seed", type=int, default=None, help="override the config's base seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("run", help="run every policy of a config")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("concentration", help="Monte Carlo check of the anytime KLinf bound")
    p.add_argument("config")
    common(p, threads=False)
    p = sub.add_parser("klinf", help="evaluate KLinf once")
    p.add_argument("dist", help="'1,2,5' | '0:0.5,1:0.5' | 'genpareto:MU,SIGMA,ZETA' | '@file.json'")
    p.add_argument("x", type=float)
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("compare", help="paired-seed regret ratio of two configs")
    p.add_argument("config_a")
    p.add_argument("config_b")
    common(p)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            run_from_config(args.config, threads=args.threads, seed=args.seed, out=args.out)
            return 0
        if args.command == "concentration":
            return 0 if concentration_from_config(args.config, seed=args.seed, out=args.out) else 1
        if args.command == "klinf":
            cls = MomentClass(args.B, args.epsilon)
            d = parse_dist_spec(args.dist, cls.epsilon, args.samples, args.seed)
            r = klinf(d, args.x, cls)
            # an unreachable target prints as Infinity
            print(json.dumps({
                "value": float(r.value), "lambda1": r.dual.lambda1, "lambda2": r.dual.lambda2,
                "extra_support": r.extra_support, "extra_mass": float(r.extra_mass)}))
            return 0
        compare_configs(args.config_a, args.config_b, threads=args.threads, seed=args.seed,
                        out=args.out)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ClassMembershipError, DivergentMomentError, InfiniteMeanError,
            DegenerateInstanceError, InfeasibleTargetError, ConvergenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Experiment harness: validated configs, trial runner, CSV export,
theory-vs-simulation comparison, presets, and the command-line interface.

CSV schema: runner,trial,t,cp_sweeps,node,mse -- one row per iteration and
node, plus node=-1 rows carrying the worst-node MSE, and trial="se" rows
carrying the deterministic state-evolution track.
"""

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import CHANNEL_KINDS, Channel, SignalPrior, sample_instance
from .errors import ConfigInvalid, DgampError, GampRuntimeError, TopologyError
from .gamp import Schedule, run_centralized, run_dgamp, run_naive
from .network import chain, load_topology, tree8
from .se import se_centralized, se_dgamp, se_naive

RUNNERS = ("dgamp", "centralized", "naive")
CSV_HEADER = ("runner", "trial", "t", "cp_sweeps", "node", "mse")


@dataclass
class ExperimentConfig:
    label: str
    runner: str = "dgamp"
    topology: str = "chain"
    L: int = 4
    N: int = 1000
    M: object = 100
    rho: float = 0.1
    snr_db: float = 30.0
    channel: str = "linear"
    clip: float = None
    T: int = 1
    T_per_node: list = None
    J: int = 1
    chi: float = 1.0
    gamma: float = None
    iterations: int = 40
    trials: int = 50
    seed: int = 0
    workers: int = 1
    include_se: bool = True

    def __post_init__(self):
        def need(cond, field, reason):
            if not cond:
                raise ConfigInvalid(field, reason)

        need(isinstance(self.label, str) and self.label, "label",
             "must be a non-empty string")
        need(self.runner in RUNNERS, "runner",
             f"must be one of {RUNNERS}, got {self.runner!r}")
        need(isinstance(self.topology, str) and self.topology, "topology",
             "must be 'chain', 'tree8', or a JSON file path")
        need(isinstance(self.L, int) and self.L >= 1, "L",
             f"must be an integer >= 1, got {self.L!r}")
        if self.topology == "tree8":
            need(self.L == 8, "L", "tree8 topology has exactly 8 nodes")
        need(isinstance(self.N, int) and self.N >= 1, "N",
             f"must be an integer >= 1, got {self.N!r}")
        if isinstance(self.M, (list, tuple)):
            need(len(self.M) == self.L, "M",
                 f"per-node list must have {self.L} entries")
            need(all(isinstance(m, int) and m >= 1 for m in self.M), "M",
                 "per-node counts must be integers >= 1")
            self.M = list(self.M)
        else:
            need(isinstance(self.M, int) and self.M >= 1, "M",
                 f"must be an integer >= 1 or a per-node list, got {self.M!r}")
        need(isinstance(self.rho, (int, float)) and 0.0 < self.rho <= 1.0,
             "rho", f"must lie in (0, 1], got {self.rho!r}")
        need(isinstance(self.snr_db, (int, float))
             and np.isfinite(self.snr_db), "snr_db",
             f"must be finite, got {self.snr_db!r}")
        need(self.channel in CHANNEL_KINDS, "channel",
             f"must be one of {CHANNEL_KINDS}, got {self.channel!r}")
        if self.channel == "clip":
            need(isinstance(self.clip, (int, float)) and self.clip > 0.0,
                 "clip", f"clip channel needs a positive threshold, got {self.clip!r}")
        need(isinstance(self.T, int) and self.T >= 1, "T",
             f"must be an integer >= 1, got {self.T!r}")
        if self.T_per_node is not None:
            tl = list(self.T_per_node)
            need(len(tl) == self.L, "T_per_node",
                 f"must have {self.L} entries")
            need(all(isinstance(t, int) and 1 <= t <= self.T for t in tl),
                 "T_per_node", f"entries must be integers in [1, {self.T}]")
            need(max(tl) == self.T, "T_per_node",
                 "the largest per-node period must equal T")
            self.T_per_node = tl
        need(isinstance(self.J, int) and self.J >= 1, "J",
             f"must be an integer >= 1, got {self.J!r}")
        need(isinstance(self.chi, (int, float)) and 0.0 < self.chi <= 1.0,
             "chi", f"must lie in (0, 1], got {self.chi!r}")
        if self.runner == "naive":
            need(isinstance(self.gamma, (int, float)) and self.gamma >= 0.0,
                 "gamma", "naive runner needs gamma >= 0")
        need(isinstance(self.iterations, int) and self.iterations >= 1,
             "iterations", f"must be an integer >= 1, got {self.iterations!r}")
        need(isinstance(self.trials, int) and self.trials >= 0, "trials",
             f"must be an integer >= 0, got {self.trials!r}")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed",
             f"must be a non-negative integer, got {self.seed!r}")
        need(isinstance(self.workers, int) and self.workers >= 1, "workers",
             f"must be an integer >= 1, got {self.workers!r}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in dataclasses.fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigInvalid(key, "unknown field")
        return cls(**doc)

    def replace(self, **kw):
        return self.from_dict({**self.to_dict(), **kw})


def load_configs(path):
    """Read one config or a list of configs from a JSON file."""
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list) or not doc:
        raise ConfigInvalid("config", "file must hold an object or a list")
    return [ExperimentConfig.from_dict(d) for d in doc]


def build_network(config):
    if config.topology == "chain":
        net = chain(config.L)
    elif config.topology == "tree8":
        net = tree8()
    else:
        net = load_topology(config.topology)
    if net.node_count != config.L:
        raise ConfigInvalid(
            "L", f"topology has {net.node_count} nodes, config says {config.L}")
    return net


def build_problem(config):
    prior = SignalPrior(config.rho)
    channel = Channel.from_snr_db(config.channel, config.snr_db, config.clip)
    return prior, channel


def build_schedule(config):
    tl = None if config.T_per_node is None else tuple(config.T_per_node)
    return Schedule(T=config.T, J=config.J, iterations=config.iterations,
                    T_per_node=tl)


def se_label(label):
    if label.startswith("dgamp-"):
        return "se-" + label[len("dgamp-"):]
    return "se-" + label


def _m_array(config):
    return np.broadcast_to(np.asarray(config.M, dtype=int),
                           (config.L,)).copy()


def run_trial(config, trial):
    """One simulation trial; returns (mse, cp_sweeps) arrays."""
    net = build_network(config)
    prior, channel = build_problem(config)
    inst = sample_instance(net, _m_array(config), prior, channel, config.N,
                           seed=config.seed, trial=trial)
    if config.runner == "dgamp":
        traj = run_dgamp(inst, net, build_schedule(config), chi=config.chi)
    elif config.runner == "centralized":
        traj = run_centralized(inst, chi=config.chi,
                               iterations=config.iterations)
    else:
        traj = run_naive(inst, net, config.gamma, chi=config.chi,
                         iterations=config.iterations)
    return traj.mse, traj.cp_sweeps


def _trial_worker(cfg_dict, trial):
    config = ExperimentConfig.from_dict(cfg_dict)
    try:
        mse, sweeps = run_trial(config, trial)
        return trial, mse, sweeps, None
    except GampRuntimeError as err:
        return trial, None, None, str(err)


def run_se(config):
    """State-evolution track matching the config's runner."""
    net = build_network(config)
    prior, channel = build_problem(config)
    m = _m_array(config)
    delta = m / config.N
    if config.runner == "dgamp":
        return se_dgamp(net, build_schedule(config), prior, channel, delta,
                        iterations=config.iterations)
    if config.runner == "centralized":
        return se_centralized(prior, channel, float(np.sum(delta)),
                              config.L, config.iterations)
    return se_naive(net, config.gamma, prior, channel, delta,
                    config.iterations)


def _emit_rows(rows, label, trial, mse, sweeps):
    iters, n_nodes = mse.shape
    for t in range(iters):
        rows.append((label, trial, t, int(sweeps[t]), -1,
                     float(mse[t].max())))
        for node in range(n_nodes):
            rows.append((label, trial, t, int(sweeps[t]), node,
                         float(mse[t, node])))


def run(config, se_only=False):
    """Run a config's trials plus its SE track.

    Returns a dict with "rows" (CSV-ready tuples), "summary" (per-iteration
    worst-node statistics over completed trials), and the SE track arrays.
    """
    rows = []
    results = {}
    diverged = []
    if not se_only and config.trials > 0:
        trials = list(range(config.trials))
        if config.workers > 1:
            cfg_dict = config.to_dict()
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                futs = [pool.submit(_trial_worker, cfg_dict, tr)
                        for tr in trials]
                outs = [f.result() for f in futs]
        else:
            outs = [_trial_worker(config.to_dict(), tr) for tr in trials]
        for trial, mse, sweeps, err in sorted(outs, key=lambda o: o[0]):
            if err is not None:
                diverged.append((trial, err))
            else:
                results[trial] = (mse, sweeps)
        for trial in sorted(results):
            mse, sweeps = results[trial]
            _emit_rows(rows, config.label, trial, mse, sweeps)

    se_mse = None
    se_sweeps = None
    if config.include_se or se_only:
        se_traj = run_se(config)
        se_mse = se_traj.mse
        if se_mse.shape[1] == 1 and config.L > 1:
            se_mse = np.tile(se_mse, (1, config.L))
        se_sweeps = se_traj.cp_sweeps
        _emit_rows(rows, se_label(config.label), "se", se_mse, se_sweeps)

    summary = {"label": config.label,
               "trials": config.trials,
               "completed": len(results),
               "diverged": diverged}
    if results:
        stack = np.stack([m.max(axis=1) for m, _ in results.values()])
        n = stack.shape[0]
        summary["t"] = list(range(stack.shape[1]))
        summary["mean_max_mse"] = stack.mean(axis=0).tolist()
        summary["mc_se"] = (
            stack.std(axis=0, ddof=1) / np.sqrt(n) if n > 1
            else np.zeros(stack.shape[1])).tolist()
        any_sweeps = next(iter(results.values()))[1]
        summary["cp_sweeps"] = [int(s) for s in any_sweeps]
    return {"rows": rows, "summary": summary,
            "se_mse": se_mse, "se_sweeps": se_sweeps}


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for label, trial, t, sweeps, node, mse in rows:
            writer.writerow((label, trial, t, sweeps, node, repr(mse)))


def compare_se(config):
    """Check mean worst-node MSE against the SE track at consensus-aligned
    iterations.  A point passes if the gap is under 0.5 dB or the SE value
    lies within 3 Monte-Carlo standard errors of the simulated mean."""
    if config.trials < 2:
        raise ConfigInvalid("trials", "compare needs at least 2 trials")
    result = run(config.replace(include_se=True))
    summary = result["summary"]
    if not summary["completed"]:
        raise ConfigInvalid("trials", "all trials diverged; nothing to compare")
    se_max = result["se_mse"].max(axis=1)
    mean = np.array(summary["mean_max_mse"])
    mc_se = np.array(summary["mc_se"])
    period = config.T if config.runner == "dgamp" else 1
    points = []
    for t in range(1, config.iterations + 1):
        if (t - 1) % period != 0:
            continue
        sim, err, se_val = float(mean[t]), float(mc_se[t]), float(se_max[t])
        gap_db = abs(10.0 * np.log10(sim / se_val))
        z = abs(sim - se_val) / err if err > 0 else np.inf
        points.append({"t": t, "sim": sim, "se": se_val, "mc_se": err,
                       "gap_db": gap_db, "z": z,
                       "passed": bool(gap_db <= 0.5 or z <= 3.0)})
    report = {"label": config.label,
              "completed": summary["completed"],
              "diverged": len(summary["diverged"]),
              "points": points,
              "max_gap_db": max(p["gap_db"] for p in points),
              "passed": all(p["passed"] for p in points)}
    return report


def presets(full_scale=False):
    """Named experiment suites.  Desk scale by default; full_scale swaps in
    the publication-size parameters."""
    out = {}

    n, m, trials = (6400, 480, 10000) if full_scale else (3200, 240, 50)
    base = dict(topology="chain", L=4, N=n, M=m, rho=0.1, snr_db=30.0,
                channel="linear", chi=1.0, iterations=70, trials=trials,
                seed=1005)
    out["fig2-desk"] = [
        ExperimentConfig(label="dgamp-T1-J1", T=1, J=1, **base),
        ExperimentConfig(label="dgamp-T2-J1", T=2, J=1, **base),
        ExperimentConfig(label="dgamp-T1-J2", T=1, J=2, **base),
    ]

    n, m, trials = (4000, 800, 10000) if full_scale else (2000, 400, 50)
    base = dict(topology="chain", L=4, N=n, M=m, rho=0.1, snr_db=30.0,
                channel="clip", clip=2.0, chi=1.0, iterations=40,
                trials=trials, seed=1002)
    out["fig3-desk"] = [
        ExperimentConfig(label="dgamp-T1-J1", T=1, J=1, **base),
        ExperimentConfig(label="dgamp-T2-J1", T=2, J=1, **base),
        ExperimentConfig(label="dgamp-Thet-J1", T=2, J=1,
                         T_per_node=[2, 1, 2, 1], **base),
    ]

    base = dict(topology="tree8", L=8, rho=0.1, snr_db=30.0,
                channel="clip", clip=2.0, T=1, J=1, iterations=120,
                seed=1003)
    if full_scale:
        out["fig4-desk"] = []
        for n, chi_d, chi_c in ((500, 0.9, 0.9), (1000, 1.0, 0.95),
                                (2000, 1.0, 0.95)):
            out["fig4-desk"] += [
                ExperimentConfig(label=f"dgamp-N{n}", runner="dgamp",
                                 N=n, M=n // 20, chi=chi_d, trials=10000,
                                 **base),
                ExperimentConfig(label=f"centralized-N{n}",
                                 runner="centralized", N=n, M=n // 20,
                                 chi=chi_c, trials=10000, **base),
            ]
    else:
        out["fig4-desk"] = [
            ExperimentConfig(label="dgamp", runner="dgamp", N=1000, M=50,
                             chi=1.0, trials=50, **base),
            ExperimentConfig(label="centralized", runner="centralized",
                             N=1000, M=50, chi=0.95, trials=50, **base),
        ]

    trials = 10000 if full_scale else 50
    base = dict(topology="tree8", L=8, N=600, rho=0.1, snr_db=30.0,
                channel="clip", clip=2.0, T=1, J=1, iterations=120,
                trials=trials, seed=1004)
    out["fig5-desk"] = [
        ExperimentConfig(label="dgamp-hom", runner="dgamp", M=90,
                         chi=0.95, **base),
        ExperimentConfig(label="dgamp-het", runner="dgamp",
                         M=[150, 30, 150, 30, 150, 30, 150, 30],
                         chi=0.95, **base),
        ExperimentConfig(label="centralized", runner="centralized", M=90,
                         chi=1.0, **base),
    ]
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_source_args(sub, with_trials=True):
    sub.add_argument("--config", help="JSON config file (object or list)")
    sub.add_argument("--preset", help="named preset suite")
    sub.add_argument("--full-scale", action="store_true",
                     help="publication-size preset parameters")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--iterations", type=int, default=None)
    sub.add_argument("--out", default=None)
    if with_trials:
        sub.add_argument("--trials", type=int, default=None)
        sub.add_argument("--workers", type=int, default=None)


def _resolve_configs(args):
    if getattr(args, "config", None):
        configs = load_configs(args.config)
    elif getattr(args, "preset", None):
        table = presets(full_scale=args.full_scale)
        if args.preset not in table:
            raise ConfigInvalid(
                "preset", f"unknown preset {args.preset!r}; "
                f"available: {sorted(table)}")
        configs = table[args.preset]
    else:
        raise ConfigInvalid("config", "pass --config FILE or --preset NAME")
    overrides = {}
    for key in ("seed", "trials", "iterations", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if overrides:
        configs = [c.replace(**overrides) for c in configs]
    return configs


def main(argv=None):
    parser = _Parser(prog="dgamp",
                     description="decentralized GAMP experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run trials and write a CSV")
    _add_source_args(p_sim)
    p_se = sub.add_parser("se", help="write only the state-evolution tracks")
    _add_source_args(p_se, with_trials=False)
    p_cmp = sub.add_parser("compare",
                           help="check simulation against state evolution")
    _add_source_args(p_cmp)
    p_pre = sub.add_parser("presets", help="print the preset suites as JSON")
    p_pre.add_argument("--full-scale", action="store_true")
    p_top = sub.add_parser("topology-check", help="validate a topology file")
    p_top.add_argument("--file", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            configs = _resolve_configs(args)
            rows = []
            for cfg in configs:
                result = run(cfg)
                rows += result["rows"]
                s = result["summary"]
                final = s["mean_max_mse"][-1] if "mean_max_mse" in s else None
                print(f"{cfg.label}: {s['completed']}/{cfg.trials} trials"
                      + (f", final worst-node MSE {final:.6g}"
                         f" ({10 * np.log10(final):.2f} dB)" if final else "")
                      + (f", {len(s['diverged'])} diverged"
                         if s["diverged"] else ""))
            out = args.out or "dgamp_results.csv"
            write_csv(out, rows)
            print(f"wrote {len(rows)} rows to {out}")
            return 0
        if args.command == "se":
            configs = _resolve_configs(args)
            rows = []
            for cfg in configs:
                rows += run(cfg, se_only=True)["rows"]
            out = args.out or "dgamp_se.csv"
            write_csv(out, rows)
            print(f"wrote {len(rows)} rows to {out}")
            return 0
        if args.command == "compare":
            configs = _resolve_configs(args)
            reports = [compare_se(cfg) for cfg in configs]
            doc = json.dumps(reports, indent=2)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(doc + "\n")
            print(doc)
            if not all(r["passed"] for r in reports):
                return 2
            return 0
        if args.command == "presets":
            table = presets(full_scale=args.full_scale)
            doc = {name: [c.to_dict() for c in cfgs]
                   for name, cfgs in table.items()}
            print(json.dumps(doc, indent=2))
            return 0
        if args.command == "topology-check":
            net = load_topology(args.file)
            print(json.dumps({"node_count": net.node_count,
                              "edges": [list(e) for e in net.edges],
                              "diameter": net.diameter,
                              "max_degree": int(net.degree.max())}))
            return 0
        parser.error(f"unknown command {args.command!r}")
    except (ConfigInvalid, TopologyError, OSError,
            json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except DgampError as err:
        print(f"internal error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

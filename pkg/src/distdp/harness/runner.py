"""Cross-product experiment execution, per-run exports and mean/std aggregation."""
from __future__ import annotations

import csv
import io
import json
import platform
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from ..accounting import oracle_values
from ..async_engine import DelaySchedule, run_async_sdbp
from ..depgraph import ConductanceMode, build_depgraph, conductance_sweep, discounted_radius, mh_matrix
from ..instances import TopologySpec, gen_topology_mdp
from ..mdp import DeltaNoise
from ..protocols import run_broadcast, run_gossip_fvi, run_sdbp, run_sdbp_bandwidth
from .config import ExperimentConfig


@dataclass(frozen=True)
class RunKey:
    topology: str
    algorithm: str
    seed: int

    @property
    def stem(self) -> str:
        return f"{self.topology}_{self.algorithm}_seed{self.seed}"


def build_instance(cfg: ExperimentConfig, topology: str, seed: int):
    p = cfg.instance
    spec = TopologySpec(topology, cfg.M, expander_degree=p.expander_degree, seed=seed)
    mdp, data = gen_topology_mdp(spec, p.states_per_machine, cfg.gamma, seed, p.n_actions,
                                 p.n_successors, p.cross_per_edge)
    return mdp, data, build_depgraph(data)


def execute(cfg: ExperimentConfig, key: RunKey):
    """One run of the cross product; returns its RunReport."""
    mdp, data, g = build_instance(cfg, key.topology, key.seed)
    noise = DeltaNoise(cfg.delta, key.seed, cfg.noise_mode) if cfg.noise_active() else DeltaNoise()
    vstar = oracle_values(mdp)
    common = dict(vstar=vstar, value_width=cfg.value_width)
    T, eps = cfg.budget, cfg.epsilon
    if key.algorithm == "sdbp":
        rep = run_sdbp(mdp, data, g, noise, T, eps, stop_at_target=True, keep_values=False, **common)
    elif key.algorithm == "broadcast":
        rep = run_broadcast(mdp, data, noise, T, eps, stop_at_target=True, keep_values=False, **common)
    elif key.algorithm == "gossip":
        w = mh_matrix(g)
        rep = run_gossip_fvi(mdp, data, g, w, noise, T, eps, stop_at_target=True, **common)
    elif key.algorithm == "async_sdbp":
        sched = DelaySchedule(cfg.schedule, cfg.D, key.seed)
        rep = run_async_sdbp(mdp, data, g, noise, sched, T, eps, stop_at_target=True,
                             keep_values=False, **common)
    else:
        rep = run_sdbp_bandwidth(mdp, data, g, cfg.B, T, noise, eps, stop_at_target=True,
                                 keep_values=False, **common)
    rep.topology = key.topology
    if np.isnan(rep.gap):
        rep.gap = float(mh_matrix(g).gap)
    rep.phi = conductance_sweep(g, ConductanceMode.GRAPH_VOLUME)
    rep.diameter = g.diameter
    rep.values = []
    rep.extras = {k: v for k, v in rep.extras.items() if k in ("schedule", "max_hold", "batch_rounds")}
    return rep


def _execute_packed(args):
    cfg_doc, key = args
    rep = execute(ExperimentConfig.from_dict(cfg_doc), key)
    return key, rep.to_csv(), rep.summary()


def _fmt_rounds(vals, exceeded, budget) -> str:
    if not vals:
        return f"> {budget:,}"
    text = f"{statistics.mean(vals):,.1f} ± {statistics.pstdev(vals) if len(vals) > 1 else 0.0:.1f}"
    if exceeded:
        text += f" ({exceeded} runs > {budget:,})"
    return text


def aggregate(cfg: ExperimentConfig, summaries: dict) -> tuple[list[dict], str]:
    """Table-style rows (one per topology) and their markdown rendering."""
    lb_eps = discounted_radius(cfg.gamma, cfg.epsilon)
    rows = []
    for topo in cfg.topologies:
        per_seed = [summaries[RunKey(topo, cfg.algorithms[0], s)] for s in cfg.seeds]
        row = {
            "topology": topo,
            "phi": statistics.mean(x["phi"] for x in per_seed),
            "gap": statistics.mean(x["gap"] for x in per_seed),
            "diameter": max(x["diameter"] for x in per_seed),
        }
        row["lb"] = min(row["diameter"], lb_eps)
        for alg in cfg.algorithms:
            runs = [summaries[RunKey(topo, alg, s)] for s in cfg.seeds]
            hit = [r["rounds_to_target"] for r in runs if r["rounds_to_target"] is not None]
            row[f"{alg}_mean"] = statistics.mean(hit) if hit else None
            row[f"{alg}_std"] = (statistics.pstdev(hit) if len(hit) > 1 else 0.0) if hit else None
            row[f"{alg}_exceeded"] = len(runs) - len(hit)
            row[f"{alg}_cell"] = _fmt_rounds(hit, len(runs) - len(hit), cfg.budget)
        rows.append(row)
    head = ["Topology", "Phi", "gap(W)"] + cfg.algorithms + ["LB"]
    lines = [f"{cfg.name}: M={cfg.M}, gamma={cfg.gamma}, epsilon={cfg.epsilon}, "
             f"delta={cfg.delta}, mean ± std over {len(cfg.seeds)} seeds", "",
             "| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        cells = [r["topology"], f"{r['phi']:.3f}", f"{r['gap']:.4f}"]
        cells += [r[f"{a}_cell"] for a in cfg.algorithms] + [str(r["lb"])]
        lines.append("| " + " | ".join(cells) + " |")
    return rows, "\n".join(lines) + "\n"


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "networkx", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    try:
        out["artifact"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["artifact"] = None
    return out


def cmd_run(cfg: ExperimentConfig, out_dir=None, quiet: bool = False) -> dict:
    """Execute the full cross product and write runs/, summary.{csv,md} and manifest.json."""
    out = Path(out_dir or cfg.output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    keys = [RunKey(t, a, s) for t in cfg.topologies for a in cfg.algorithms for s in cfg.seeds]
    jobs = [(cfg.to_dict(), k) for k in keys]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_execute_packed, jobs))
    else:
        results = [_execute_packed(j) for j in jobs]
    summaries = {}
    for key, text, summ in results:
        (out / "runs" / f"{key.stem}.csv").write_text(text)
        summ = {**summ, "seed": key.seed}
        (out / "runs" / f"{key.stem}.json").write_text(json.dumps(summ, indent=2, sort_keys=True))
        summaries[key] = summ
        if not quiet:
            r = summ["rounds_to_target"]
            print(f"{key.stem}: {'> budget' if r is None else r}")
    rows, md = aggregate(cfg, summaries)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=[k for k in rows[0] if not k.endswith("_cell")],
                       extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    (out / "summary.csv").write_text(buf.getvalue())
    (out / "summary.md").write_text(md)
    manifest = {"config": cfg.to_dict(), "config_hash": cfg.digest(), "seeds": cfg.seeds,
                "runs": [k.stem for k in keys], "versions": _versions()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    if not quiet:
        print(md)
    return {"rows": rows, "markdown": md, "summaries": summaries, "out": str(out)}

"""Command-line entry point: every experiment as a subcommand.

Each run reads one JSON config file (sections: environment, model, pde,
experiment, output), takes --seed / --out overrides, writes flat CSV/JSON
outputs plus a manifest, and exits 0 on success, 1 on a rejected
precondition, 2 when invoked with --check and the declared check fails.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .environment import (
    FiniteSupport,
    JumpKernel,
    RateFunction,
    ShiftedBeta,
    UniformInterval,
    capped_linear_rate,
    indicator_rate,
    sample_rate_field,
)
from .equilibria import (
    QuenchedProductLaw,
    build_flux_table,
    critical_density,
    critical_density_report,
    sample_product_measure,
)
from .dynamics import (
    Configuration,
    build_interaction_graph,
    components_to_csv,
    configuration_at_density,
    current_report,
    measure_current,
    origin_component_samples,
    path_tail_bound,
    run_kexclusion,
    run_zrp,
    snapshots_to_csv,
    subcritical_block_length,
    zero_configuration,
)
from .environment import TOTALLY_ASYMMETRIC
from .hydro import (
    ScalingSpec,
    SmoothedIndicator,
    Triangular,
    TruncatedGaussian,
    run_scaling_experiment,
)
from .io_utils import (
    canonical_json,
    count_rows,
    sha256_file,
    sha256_text,
    write_csv,
    write_json_atomic,
)
from .oracle import run_verification_suite, suite_to_jsonl
from .pde import Profile, godunov_solve, l1_distance, lax_oleinik_solve, riemann_solution_field
from .equilibria import FluxTable
from .rng import seed_label


class PreconditionError(ValueError):
    pass


class CheckFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise PreconditionError("config must be a JSON object")
    return cfg


def law_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind == "finite_support":
        return FiniteSupport(tuple(cfg["values"]), tuple(cfg["weights"]))
    if kind == "delta":
        return FiniteSupport((float(cfg.get("value", 1.0)),), (1.0,))
    if kind == "uniform_interval":
        return UniformInterval(float(cfg["c"]))
    if kind == "shifted_beta":
        return ShiftedBeta(float(cfg["c"]), float(cfg["a"]), float(cfg["b"]))
    raise PreconditionError(f"unknown disorder law kind {kind!r}")


def rate_from_config(cfg: dict) -> RateFunction:
    kind = cfg.get("kind", "indicator")
    if kind == "indicator":
        return indicator_rate()
    if kind == "capped_linear":
        return capped_linear_rate(int(cfg["cap"]))
    if kind == "table":
        return RateFunction(tuple(cfg["table"]), float(cfg["r_inf"]))
    raise PreconditionError(f"unknown rate kind {kind!r}")


def kernel_from_config(cfg: dict) -> JumpKernel:
    if cfg is None:
        return TOTALLY_ASYMMETRIC
    return JumpKernel(tuple(cfg["displacements"]), tuple(cfg["probabilities"]))


def profile_from_config(cfg: dict) -> Profile:
    kind = cfg.get("kind")
    if kind == "constant":
        return Profile.constant(float(cfg["value"]))
    if kind == "step":
        return Profile.step(float(cfg.get("x0", 0.0)), float(cfg["left"]), float(cfg["right"]))
    if kind == "piecewise":
        return Profile.piecewise(cfg["breakpoints"], cfg["values"])
    raise PreconditionError(f"unknown profile kind {kind!r}")


def tests_from_config(items) -> tuple:
    out = []
    for it in items:
        kind = it.get("kind")
        if kind == "triangular":
            out.append(Triangular(float(it.get("center", 0.0)),
                                  float(it.get("half_width", 1.0)),
                                  float(it.get("height", 1.0))))
        elif kind == "gaussian":
            out.append(TruncatedGaussian(float(it.get("center", 0.0)),
                                         float(it.get("sigma", 0.5)),
                                         float(it.get("radius", 1.5))))
        elif kind == "plateau":
            out.append(SmoothedIndicator(float(it["a"]), float(it["b"]),
                                         float(it.get("ramp", 0.25))))
        else:
            raise PreconditionError(f"unknown test function kind {kind!r}")
    return tuple(out)


def flux_from_config(cfg: dict, env: dict) -> FluxTable:
    kind = cfg.get("kind", "from_law")
    rho_max = float(cfg.get("rho_max", 1.0))
    n = int(cfg.get("n", 2001))
    if kind == "quadratic":
        # f(rho) = rho (rho_max - rho) / rho_max, the symmetric benchmark flux
        return FluxTable.from_function(
            lambda r: r * (rho_max - r) / rho_max, rho_max, n)
    if kind == "zrp_homogeneous":
        return FluxTable.from_function(lambda r: r / (1.0 + r), rho_max, n)
    if kind == "from_law":
        law = law_from_config(env["law"])
        rate = rate_from_config(env.get("rate", {"kind": "indicator"}))
        return build_flux_table(law, rate, rho_max, n)
    raise PreconditionError(f"unknown flux kind {kind!r}")


# ---------------------------------------------------------------------------
# Manifest plumbing
# ---------------------------------------------------------------------------

class RunContext:
    def __init__(self, command: str, cfg: dict, out_dir: str, seed: int):
        self.command = command
        self.cfg = cfg
        self.out_dir = out_dir
        self.seed = seed
        self.outputs: list[dict] = []
        self.seed_ledger: list[str] = []
        self.t0 = time.monotonic()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def register(self, name: str) -> None:
        p = self.path(name)
        self.outputs.append({
            "name": name,
            "rows": count_rows(p) if name.endswith(".csv") else None,
            "sha256": sha256_file(p),
        })

    def note_seed(self, *path) -> None:
        self.seed_ledger.append(seed_label(self.seed, *path))

    def finish(self) -> dict:
        body = {
            "command": self.command,
            "config": self.cfg,
            "config_sha256": sha256_text(canonical_json(self.cfg)),
            "tool_version": __version__,
            "seed": self.seed,
            "seed_ledger": self.seed_ledger,
            "outputs": self.outputs,
        }
        body["content_hash"] = sha256_text(canonical_json(body))
        body["wall_clock_s"] = time.monotonic() - self.t0
        write_json_atomic(self.path("manifest.json"), body)
        return body


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_equilibria(ctx: RunContext, check: bool) -> None:
    env = ctx.cfg["environment"]
    exp = ctx.cfg.get("experiment", {})
    law = law_from_config(env["law"])
    rate = rate_from_config(env.get("rate", {"kind": "indicator"}))
    rho_max = float(exp.get("rho_max", 4.0))
    n = int(exp.get("n", 2001))
    table = build_flux_table(law, rate, rho_max, n)
    table.to_csv(ctx.path("flux.csv"))
    ctx.register("flux.csv")
    write_json_atomic(ctx.path("critical_density.json"),
                      critical_density_report(law, rate))
    ctx.register("critical_density.json")
    if check:
        if not (table.is_nondecreasing() and table.is_concave(2.0 * table.grid_step)):
            raise CheckFailure("flux table failed shape checks")


def _initial_from_config(cfg: dict, field_, rate, K, seed):
    kind = cfg.get("kind", "zero")
    if kind == "zero":
        return zero_configuration(field_.L, cap=K)
    if kind == "flat":
        return configuration_at_density(field_.L, float(cfg["rho"]), cap=K)
    if kind == "product_measure":
        phi = float(cfg["phi"])
        qlaw = QuenchedProductLaw(phi, field_, rate)
        occ = sample_product_measure(qlaw, seed)
        return Configuration(occ)
    raise PreconditionError(f"unknown initial kind {kind!r}")


def cmd_simulate(ctx: RunContext, check: bool) -> None:
    env = ctx.cfg["environment"]
    model = ctx.cfg.get("model", {"type": "zrp"})
    exp = ctx.cfg["experiment"]
    law = law_from_config(env["law"])
    L = int(env["L"])
    field_ = sample_rate_field(law, L, ctx.seed)
    ctx.note_seed("rate-field")
    horizon = float(exp["horizon"])
    bond = int(exp.get("bond", 0))
    burn_in = float(exp.get("burn_in", 0.0))
    n_batches = int(exp.get("n_batches", 20))
    snapshot_times = [float(t) for t in exp.get("snapshot_times", [])]
    edges = np.linspace(burn_in, horizon, n_batches + 1) if horizon > 0 else []
    rate = rate_from_config(env.get("rate", {"kind": "indicator"}))
    if model.get("type", "zrp") == "zrp":
        kernel = kernel_from_config(env.get("kernel"))
        init = _initial_from_config(exp.get("init", {}), field_, rate, None, ctx.seed + 1)
        result = run_zrp(field_, kernel, rate, init, horizon, ctx.seed + 2,
                         bond=bond, checkpoint_times=edges,
                         snapshot_times=snapshot_times)
    elif model["type"] == "kexclusion":
        K = int(model["K"])
        init = _initial_from_config(exp.get("init", {}), field_, rate, K, ctx.seed + 1)
        result = run_kexclusion(field_, K, init, horizon, ctx.seed + 2,
                                bond=bond, checkpoint_times=edges,
                                snapshot_times=snapshot_times)
    else:
        raise PreconditionError(f"unknown model type {model['type']!r}")
    ctx.note_seed("run")
    snaps = result.snapshots + [(horizon, result.config.occupancies)]
    snapshots_to_csv(snaps, ctx.path("trajectory.csv"))
    ctx.register("trajectory.csv")
    if exp.get("diagnostics") and result.snapshots:
        from .hydro import platoon_diagnostics
        diag = platoon_diagnostics(result.snapshots, field_)
        diag.to_csv(ctx.path("condensation.csv"))
        ctx.register("condensation.csv")
    if horizon > 0:
        rep = current_report(result.counter, burn_in, n_batches)
        write_json_atomic(ctx.path("current.json"), rep)
        ctx.register("current.json")
        if check and exp.get("init", {}).get("kind") == "product_measure":
            phi = float(exp["init"]["phi"])
            if abs(rep["current"] - phi) > 3.0 * rep["se"]:
                raise CheckFailure(
                    f"stationary current {rep['current']:.4f} not within 3 SE of {phi}")


def cmd_pde(ctx: RunContext, check: bool) -> None:
    pcfg = ctx.cfg["pde"]
    flux = flux_from_config(pcfg.get("flux", {}), ctx.cfg.get("environment", {}))
    dx = float(pcfg.get("dx", 1e-3))
    cfl = float(pcfg.get("cfl", 0.9))
    t = float(pcfg.get("t", 0.5))
    a, b = (float(v) for v in pcfg.get("domain", (-1.0, 1.0)))
    u_l, u_r = (float(v) for v in pcfg["riemann"])
    u0 = Profile.step(0.0, u_l, u_r)
    god = godunov_solve(u0, flux, dx, cfl, t, domain=(a, b))
    lax = lax_oleinik_solve(u0, flux, god.x, t)
    ref = riemann_solution_field(u_l, u_r, flux, god.x, t)
    god.to_csv(ctx.path("solution_godunov.csv"))
    lax.to_csv(ctx.path("solution_variational.csv"))
    ref.to_csv(ctx.path("solution_reference.csv"))
    for name in ("solution_godunov.csv", "solution_variational.csv",
                 "solution_reference.csv"):
        ctx.register(name)
    dists = {
        "godunov_vs_variational": l1_distance(god, lax),
        "godunov_vs_reference": l1_distance(god, ref),
        "variational_vs_reference": l1_distance(lax, ref),
    }
    write_json_atomic(ctx.path("distances.json"), dists)
    ctx.register("distances.json")
    if check and max(dists.values()) >= 1e-2:
        raise CheckFailure(f"solver cross-distances too large: {dists}")


def cmd_hydro(ctx: RunContext, check: bool) -> None:
    env = ctx.cfg["environment"]
    exp = ctx.cfg["experiment"]
    if exp.get("kind", "scaling") == "flux":
        _cmd_hydro_flux(ctx, check)
        return
    spec = ScalingSpec(
        law=law_from_config(env["law"]),
        rate=rate_from_config(env.get("rate", {"kind": "indicator"})),
        u0=profile_from_config(exp["u0"]),
        t=float(exp.get("t", 1.0)),
        scales=tuple(int(n) for n in exp["scales"]),
        tests=tests_from_config(exp.get("tests", [])),
        replicas=int(exp.get("replicas", 10)),
        seed=ctx.seed,
        mode=exp.get("mode", "marginal"),
        quenched_fixed=bool(exp.get("quenched_fixed", False)),
        block_window=tuple(exp["block_window"]) if "block_window" in exp else None,
        block_width_macro=float(exp.get("block_width_macro", 1.0)),
    )
    report = run_scaling_experiment(spec)
    report.to_csv(ctx.path("comparison.csv"))
    ctx.register("comparison.csv")
    if spec.block_window is not None:
        report.block_profile_to_csv(ctx.path("block_profile.csv"))
        ctx.register("block_profile.csv")
    manifest = {
        "spec_sha256": sha256_text(canonical_json(ctx.cfg)),
        "seeds": report.seeds,
        "run_id": sha256_text(canonical_json(ctx.cfg))[:12],
        "window": report.window,
        "reference": report.reference,
        "sentinel_violations": report.sentinel_violations,
    }
    write_json_atomic(ctx.path("hydro_manifest.json"), manifest)
    ctx.register("hydro_manifest.json")
    if check:
        if report.sentinel_violations:
            raise CheckFailure("sentinel buffer detected boundary contamination")
        for phi in spec.tests:
            means = [report.summary[(n, phi.test_id)]["mean"] for n in spec.scales]
            ses = [report.summary[(n, phi.test_id)]["se"] for n in spec.scales]
            for i in range(len(means) - 1):
                pooled = math.hypot(ses[i], ses[i + 1])
                if means[i + 1] > means[i] + pooled:
                    raise CheckFailure("discrepancies not nonincreasing within 1 pooled SE")


def _cmd_hydro_flux(ctx: RunContext, check: bool) -> None:
    from .hydro import estimate_flux_empirical

    env = ctx.cfg["environment"]
    exp = ctx.cfg["experiment"]
    model = ctx.cfg.get("model", {"type": "zrp"})
    law = law_from_config(env["law"])
    kwargs = dict(
        densities=[float(r) for r in exp["densities"]],
        L=int(env["L"]),
        horizon=float(exp["horizon"]),
        replicas=int(exp.get("replicas", 4)),
        seed=ctx.seed,
        mode=exp.get("current_mode", "bond"),
    )
    if model.get("type", "zrp") == "zrp":
        est = estimate_flux_empirical(
            "zrp", law, rate=rate_from_config(env.get("rate", {"kind": "indicator"})),
            **kwargs)
    else:
        est = estimate_flux_empirical("kexclusion", law, K=int(model["K"]), **kwargs)
    ctx.note_seed("flux-experiment")
    est.to_csv(ctx.path("empirical_flux.csv"))
    ctx.register("empirical_flux.csv")
    checks = est.concavity_violations()
    write_json_atomic(ctx.path("concavity.json"), {
        "stationary": est.stationary.tolist(),
        "midpoints": checks,
    })
    ctx.register("concavity.json")
    if check and any(c["violation"] for c in checks):
        raise CheckFailure("midpoint concavity violated beyond 2 pooled SE")


def cmd_oracle(ctx: RunContext, check: bool) -> None:
    exp = ctx.cfg.get("experiment", {})
    records = run_verification_suite(
        ctx.seed,
        n_cases=int(exp.get("n_cases", 20)),
        n_pairs=int(exp.get("n_pairs", 100)),
    )
    suite_to_jsonl(records, ctx.path("suite.jsonl"))
    ctx.register("suite.jsonl")
    if check and not all(r["pass"] for r in records):
        raise CheckFailure("verification suite has failing cases")


def cmd_graph(ctx: RunContext, check: bool) -> None:
    env = ctx.cfg.get("environment", {})
    exp = ctx.cfg["experiment"]
    kernel = kernel_from_config(env.get("kernel"))
    r_inf = float(exp.get("r_inf", 1.0))
    t0 = float(exp["t0"])
    L = exp.get("L", 10_000)
    L = tuple(L) if isinstance(L, list) else int(L)
    graph = build_interaction_graph(kernel, t0, L, ctx.seed, r_inf=r_inf)
    components_to_csv(graph, ctx.path("components.csv"))
    ctx.register("components.csv")
    n_samples = int(exp.get("samples", 0))
    star = set(kernel.neighborhood) | {-d for d in kernel.neighborhood}
    K = len(star)
    if n_samples > 0:
        sizes, edges = origin_component_samples(kernel, t0, L, n_samples, ctx.seed + 1,
                                                r_inf=r_inf)
        rows = []
        max_n = 1
        while 2 * max_n - 1 <= int(edges.max(initial=1)):
            max_n += 1
        for n in range(1, max_n + 1):
            hits = int(np.sum(edges >= 2 * n - 1))
            rows.append((n, 2 * n - 1, hits, hits / n_samples,
                         path_tail_bound(K, r_inf, t0, n)))
        write_csv(ctx.path("origin_tail.csv"),
                  ["n", "min_edges", "hits", "empirical", "bound"], rows)
        ctx.register("origin_tail.csv")
        if check:
            for n, _me, hits, emp, bound in rows:
                if hits >= 100 and emp > bound:
                    raise CheckFailure(f"empirical tail {emp} exceeds bound {bound} at n={n}")
    write_json_atomic(ctx.path("threshold.json"), {
        "K": K,
        "r_inf": r_inf,
        "t0": t0,
        "t0_star": subcritical_block_length(kernel, r_inf),
        "mean_component_size": float(np.mean(graph.component_sizes)
                                     if graph.component_sizes.size else 0.0),
    })
    ctx.register("threshold.json")


def cmd_selfcheck(out_dir: str) -> int:
    """Verify every output file is referenced by exactly one manifest."""
    if not os.path.isdir(out_dir):
        print(f"selfcheck: no such directory {out_dir!r}", file=sys.stderr)
        return 1
    manifests = []
    referenced: dict[str, int] = {}
    for root, _dirs, files in os.walk(out_dir):
        for name in files:
            if name.startswith("manifest") and name.endswith(".json"):
                path = os.path.join(root, name)
                with open(path) as fh:
                    body = json.load(fh)
                manifests.append((root, body))
                for out in body.get("outputs", []):
                    full = os.path.join(root, out["name"])
                    referenced[full] = referenced.get(full, 0) + 1
                    if sha256_file(full) != out["sha256"]:
                        print(f"selfcheck: hash mismatch for {full}", file=sys.stderr)
                        return 2
    ok = True
    for root, _dirs, files in os.walk(out_dir):
        for name in files:
            if name.startswith("manifest") and name.endswith(".json"):
                continue
            full = os.path.join(root, name)
            refs = referenced.get(full, 0)
            if refs != 1:
                print(f"selfcheck: {full} referenced {refs} times", file=sys.stderr)
                ok = False
    if not manifests:
        print("selfcheck: no manifests found", file=sys.stderr)
        ok = False
    return 0 if ok else 2


COMMANDS = {
    "equilibria": cmd_equilibria,
    "simulate": cmd_simulate,
    "hydro": cmd_hydro,
    "pde": cmd_pde,
    "oracle": cmd_oracle,
    "graph": cmd_graph,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="zrplab",
        description="Disordered particle-system simulation laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--check", action="store_true")
    p = sub.add_parser("selfcheck")
    p.add_argument("--out", required=False, default=None)
    args = parser.parse_args(argv)

    if args.command == "selfcheck":
        out_dir = args.out or os.environ.get("ZRPLAB_OUT", ".")
        return cmd_selfcheck(out_dir)

    check_error = None
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        out_dir = args.out or os.environ.get("ZRPLAB_OUT") \
            or cfg.get("output", {}).get("dir", ".")
        ctx = RunContext(args.command, cfg, out_dir, seed)
        try:
            COMMANDS[args.command](ctx, args.check)
        except CheckFailure as exc:
            check_error = exc
        ctx.finish()  # manifest covers whatever was produced, pass or fail
    except (PreconditionError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if check_error is not None:
        print(f"check failed: {check_error}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

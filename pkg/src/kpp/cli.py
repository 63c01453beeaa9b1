"""Command-line entry point.

Subcommands: solve, sample, serve, train-rbm, select-batch, rerank,
train-nce, gen-data, bench.  Flags are long-form only and seeds are mandatory
wherever randomness is involved.  Every run writes a JSON manifest (resolved
config, seed, tool version, input digests, wall clock) so outputs are
reproducible bit for bit from the recorded inputs.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from .active import (
    SelectionConfig,
    cardinality_lambda_bound,
    load_embeddings,
    make_clustered_store,
    save_embeddings,
    select_batch,
)
from .client import ClientConfig
from .ebm import (
    RbmParams,
    TrainConfig,
    bars_and_stripes,
    load_dataset,
    load_params,
    save_dataset,
    save_metrics,
    save_params,
    train,
)
from .errors import KppError
from .ising import (
    IsingProblem,
    QuboProblem,
    parse_problem,
    qubo_to_ising,
    serialize_problem,
)
from .rerank import (
    SpinEncoderConfig,
    UniformPoolProposal,
    encode_candidates,
    load_pool,
    rerank_records,
    resample_candidate,
    residual_weights,
    save_pool,
    train_nce,
)
from .samplers import (
    AnnealSchedule,
    ExactConfig,
    FixedTempConfig,
    SamplerConfig,
    enumerate_energies,
    sample,
    sampleset_to_text,
    simulated_anneal,
)
from .service import CimService, ServiceConfig


class UsageError(Exception):
    """Command-line misuse detected after parsing."""


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(args, inputs: list, outputs: list, started: float):
    config = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func", "manifest") and not callable(v)
    }
    manifest = {
        "subcommand": args.subcommand,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "wall_clock_s": time.time() - started,
    }
    path = args.manifest or f"{args.subcommand}.manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _load_ising(path) -> tuple[IsingProblem, bool]:
    """Problem file -> (ising image, was_qubo)."""
    with open(path) as fh:
        problem = parse_problem(fh.read())
    if isinstance(problem, QuboProblem):
        return qubo_to_ising(problem), True
    return problem, False


def _schedule_from_args(args) -> AnnealSchedule | None:
    if args.t_initial is None:
        return None
    return AnnealSchedule(
        t_initial=args.t_initial,
        t_final=args.t_final,
        decay=args.decay,
        sweeps_per_stage=args.sweeps_per_stage,
    )


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(
        seed=args.seed,
        reads=args.reads,
        schedule=_schedule_from_args(args),
        top_k=args.top_k,
        read_output=getattr(args, "read_output", "best"),
    )


def _top_k(text: str):
    if text.lower() == "none":
        return None
    return int(text)


def _emit(text: str, out_path) -> list:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
        return [out_path]
    sys.stdout.write(text)
    return []


# -- subcommand handlers ----------------------------------------------------


def cmd_solve(args) -> tuple[list, list]:
    ising, was_qubo = _load_ising(args.infile)
    if args.backend == "exact":
        energies = enumerate_energies(ising)
        best = int(np.argmin(energies))
        spins = [1 if (best >> i) & 1 else -1 for i in range(ising.n)]
        emin = float(energies[best])
    else:
        if args.seed is None:
            raise UsageError("--backend sa requires --seed")
        result = simulated_anneal(ising, _sampler_config(args))
        spins = list(result.best.spins)
        emin = result.best.energy
    if was_qubo:
        config = "".join(str((s + 1) // 2) for s in spins)
    else:
        config = "".join("+" if s > 0 else "-" for s in spins)
    text = f"minimum energy: {emin!r}\nargmin: {config}\n"
    outputs = _emit(text, args.out)
    return [args.infile], outputs


def cmd_sample(args) -> tuple[list, list]:
    ising, _ = _load_ising(args.infile)
    if args.backend == "sa":
        result = sample("sa", ising, _sampler_config(args))
    elif args.backend == "fixed-temp":
        if args.beta is None:
            raise UsageError("--backend fixed-temp requires --beta")
        cfg = FixedTempConfig(
            seed=args.seed,
            beta=args.beta,
            sweeps=args.sweeps,
            burn_in=args.burn_in,
            thin=args.thin,
        )
        result = sample("fixed_temp", ising, cfg)
    elif args.backend == "exact":
        result = sample("exact", ising, ExactConfig(beta=args.beta or 1.0, reads=args.reads))
    else:  # cim
        client = ClientConfig.from_env(
            **({"base_url": args.url} if args.url else {})
        )
        result = sample("cim_remote", ising, _sampler_config(args), client_config=client)
    outputs = _emit(sampleset_to_text(result, seed=args.seed), args.out)
    return [args.infile], outputs


def cmd_serve(args) -> tuple[list, list]:
    config = ServiceConfig(
        capacity=args.capacity,
        workers=args.workers,
        queue_delay_s=args.queue_delay,
        require_token=not args.no_token,
    )
    service = CimService(host=args.host, port=args.port, config=config).start()
    print(f"serving mock CIM at {service.base_url} (ctrl-c to stop)", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return [], []


def cmd_train_rbm(args) -> tuple[list, list]:
    data = load_dataset(args.data)
    p0 = RbmParams.random(
        data.shape[1], args.hidden, scale=args.weight_init_scale, seed=args.seed
    )
    sampler = None
    if args.backend == "sa":
        sampler = _sampler_config(args)
    tc = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        backend=args.backend,
        sampler=sampler,
        weight_init_scale=args.weight_init_scale,
        seed=args.seed,
    )
    params, metrics = train(p0, data, tc)
    outputs = []
    save_params(args.out_params, params)
    outputs.append(args.out_params)
    save_metrics(args.out_metrics, metrics)
    outputs.append(args.out_metrics)
    if not args.no_figure:
        from .report import render_training_curves

        figure = args.figure or str(args.out_metrics) + ".png"
        render_training_curves(metrics, figure)
        outputs.append(figure)
    last = metrics[-1]
    summary = f"final loss: {last['loss']!r}"
    if "nll" in last:
        summary += f"  exact nll: {last['nll']!r}"
    print(summary)
    return [args.data], outputs


def cmd_select_batch(args) -> tuple[list, list]:
    store = load_embeddings(args.embeddings)
    candidates = (
        list(range(len(store)))
        if args.candidates is None
        else [int(c) for c in args.candidates.split(",")]
    )
    lam = (
        cardinality_lambda_bound(store, candidates, args.gamma)
        if args.penalty == "auto"
        else float(args.penalty)
    )
    cfg = SelectionConfig(k=args.k, gamma=args.gamma, lam=lam, solver=args.solver)
    result = select_batch(store, candidates, cfg, seed=args.seed, reads=args.reads)
    payload = {
        "chosen_ids": list(result.chosen_ids),
        "chosen_indices": list(result.chosen_indices),
        "objective": result.objective,
        "diversity": result.diversity,
        "lambda": lam,
    }
    outputs = _emit(json.dumps(payload) + "\n", args.out)
    return [args.embeddings], outputs


def cmd_rerank(args) -> tuple[list, list]:
    sequences = load_pool(args.pool)
    qbm = load_params(args.params)
    cfg = SpinEncoderConfig(
        mode="token_bits", n_spins=qbm.n, bits_per_token=args.bits_per_token
    )
    cset = encode_candidates(sequences, cfg)
    records = rerank_records(cset, qbm)
    weights = residual_weights(cset, qbm)
    chosen = resample_candidate(weights, args.seed)
    lines = "".join(json.dumps(r) + "\n" for r in records)
    outputs = _emit(lines, args.out)
    if not args.no_figure and args.out:
        from .report import render_rerank_weights

        figure = args.figure or str(args.out) + ".png"
        render_rerank_weights(records, figure)
        outputs.append(figure)
    print(f"chosen: {chosen}")
    return [args.pool, args.params], outputs


def cmd_train_nce(args) -> tuple[list, list]:
    from .ebm import BmParams

    positives = load_pool(args.data)
    pool = load_pool(args.pool)
    length = len(positives[0])
    cfg = SpinEncoderConfig(
        mode="token_bits",
        n_spins=length * args.bits_per_token,
        bits_per_token=args.bits_per_token,
    )
    pos_enc = encode_candidates(positives, cfg).encodings
    pool_enc = encode_candidates(pool, cfg).encodings
    qbm0 = BmParams.zeros(cfg.n_spins)
    trained, history = train_nce(
        qbm0,
        pos_enc,
        UniformPoolProposal(pool=pool_enc),
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
        batch_size=args.batch_size,
        negatives=args.negatives,
    )
    outputs = []
    save_params(args.out_params, trained)
    outputs.append(args.out_params)
    if args.out_history:
        with open(args.out_history, "w") as fh:
            for step, value in enumerate(history):
                fh.write(json.dumps({"step": step, "objective": value}) + "\n")
        outputs.append(args.out_history)
    print(f"final objective: {history[-1]!r}")
    return [args.data, args.pool], outputs


def cmd_relax(args) -> tuple[list, list]:
    from .latent import RelaxationParams, relax_zeta

    rho = [float(x) for x in args.rho.split(",")]
    q = [float(x) for x in args.q.split(",")]
    if len(rho) != len(q):
        raise UsageError("--rho and --q must have the same length")
    rp = RelaxationParams(beta=args.beta)
    values = [relax_zeta(r, qq, rp) for r, qq in zip(rho, q)]
    text = "".join(f"{v!r}\n" for v in values)
    outputs = _emit(text, args.out)
    return [], outputs


def cmd_gen_data(args) -> tuple[list, list]:
    rng = np.random.default_rng(args.seed)
    if args.kind == "bars-stripes":
        save_dataset(args.out, bars_and_stripes(args.side, seed=args.seed))
    elif args.kind == "clusters":
        store, _ = make_clustered_store(
            m=args.count, clusters=args.clusters, dim=args.dim, seed=args.seed
        )
        save_embeddings(args.out, store)
    elif args.kind == "pool":
        sequences = rng.integers(0, args.vocab, size=(args.count, args.length))
        save_pool(args.out, sequences.tolist())
    elif args.kind == "problem":
        coupling = {
            (i, j): float(rng.uniform(-1, 1))
            for i in range(args.size)
            for j in range(i + 1, args.size)
        }
        problem = IsingProblem(
            n=args.size, field=rng.uniform(-1, 1, args.size), coupling=coupling
        )
        with open(args.out, "w") as fh:
            fh.write(serialize_problem(problem))
    return [], [args.out]


def cmd_bench(args) -> tuple[list, list]:
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    for size in sizes:
        for instance in range(args.instances):
            rng = np.random.default_rng(
                np.random.SeedSequence((args.seed, size, instance))
            )
            coupling = {
                (i, j): float(rng.uniform(-1, 1))
                for i in range(size)
                for j in range(i + 1, size)
            }
            problem = IsingProblem(
                n=size, field=rng.uniform(-1, 1, size), coupling=coupling
            )
            exact_min = None
            if size <= 20:
                start = time.perf_counter()
                exact_min = float(enumerate_energies(problem).min())
                rows.append(
                    {
                        "size": size,
                        "instance": instance,
                        "backend": "exact",
                        "seconds": time.perf_counter() - start,
                        "min_energy": exact_min,
                        "exact_min": exact_min,
                        "hit": True,
                    }
                )
            cfg = SamplerConfig(
                seed=instance, reads=args.reads, schedule=_schedule_from_args(args)
            )
            start = time.perf_counter()
            result = simulated_anneal(problem, cfg)
            elapsed = time.perf_counter() - start
            rows.append(
                {
                    "size": size,
                    "instance": instance,
                    "backend": "sa",
                    "seconds": elapsed,
                    "min_energy": result.best.energy,
                    "exact_min": exact_min,
                    "hit": None
                    if exact_min is None
                    else bool(abs(result.best.energy - exact_min) <= 1e-9),
                }
            )
    lines = "".join(json.dumps(r) + "\n" for r in rows)
    outputs = _emit(lines, args.out)
    if not args.no_figure:
        from .report import render_bench_figures

        figdir = args.figures or (str(args.out) + ".figures" if args.out else "bench-figures")
        outputs.extend(render_bench_figures(rows, figdir))
    hit_rows = [r for r in rows if r["backend"] == "sa" and r["hit"] is not None]
    if hit_rows:
        rate = sum(r["hit"] for r in hit_rows) / len(hit_rows)
        print(f"sa ground-state hit rate: {rate:.3f}")
    return [], outputs


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpp",
        description="Ising/QUBO modeling, Boltzmann sampling, EBM training, "
        "batch selection, and residual-energy reranking.",
    )
    parser.add_argument("--version", action="version", version=f"kpp {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--manifest", default=None, help="manifest path (default <subcommand>.manifest.json)")

    def add_schedule(p):
        p.add_argument("--t-initial", type=float, default=None, help="initial temperature (default: auto)")
        p.add_argument("--t-final", type=float, default=0.05)
        p.add_argument("--decay", type=float, default=0.98)
        p.add_argument("--sweeps-per-stage", type=int, default=4)

    p = sub.add_parser("solve", help="find the minimum-energy configuration")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--backend", choices=("exact", "sa"), default="exact")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reads", type=int, default=2000)
    p.add_argument("--top-k", type=_top_k, default="none")
    add_schedule(p)
    p.add_argument("--out", default=None)
    add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sample", help="draw Boltzmann-style samples")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--backend", choices=("sa", "fixed-temp", "exact", "cim"), default="sa")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reads", type=int, default=2000)
    p.add_argument("--top-k", type=_top_k, default=100)
    p.add_argument("--read-output", choices=("best", "final"), default="best")
    add_schedule(p)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--sweeps", type=int, default=100_000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--url", default=None, help="service base URL (default KPP_BASE_URL)")
    p.add_argument("--out", default=None)
    add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("serve", help="run the mock CIM job service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--capacity", type=int, default=256)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--queue-delay", type=float, default=0.0)
    p.add_argument("--no-token", action="store_true", help="disable bearer-token checks")
    add_common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train-rbm", help="train an RBM with a sampled negative phase")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", type=int, required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=10**9)
    p.add_argument("--backend", choices=("exact", "sa"), default="exact")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reads", type=int, default=2000)
    p.add_argument("--top-k", type=_top_k, default="none")
    add_schedule(p)
    p.add_argument("--weight-init-scale", type=float, default=0.01)
    p.add_argument("--out-params", required=True)
    p.add_argument("--out-metrics", required=True)
    p.add_argument("--figure", default=None)
    p.add_argument("--no-figure", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_train_rbm)

    p = sub.add_parser("select-batch", help="QUBO-driven diverse batch selection")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--lambda", dest="penalty", default="auto",
                   help="cardinality penalty weight, or `auto` for the documented bound")
    p.add_argument("--solver", choices=("auto", "exact", "sa"), default="auto")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reads", type=int, default=256)
    p.add_argument("--candidates", default=None, help="comma-separated store indices")
    p.add_argument("--out", default=None)
    add_common(p)
    p.set_defaults(func=cmd_select_batch)

    p = sub.add_parser("rerank", help="residual-energy reranking of a candidate pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--bits-per-token", type=int, default=2)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--figure", default=None)
    p.add_argument("--no-figure", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("train-nce", help="NCE training of the energy model")
    p.add_argument("--data", required=True, help="positive sequences (pool format)")
    p.add_argument("--pool", required=True, help="proposal pool (negatives)")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bits-per-token", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--negatives", type=int, default=32)
    p.add_argument("--out-params", required=True)
    p.add_argument("--out-history", default=None)
    add_common(p)
    p.set_defaults(func=cmd_train_nce)

    p = sub.add_parser("relax", help="evaluate the latent relaxation elementwise")
    p.add_argument("--rho", required=True, help="comma-separated noise draws in [0,1]")
    p.add_argument("--q", required=True, help="comma-separated Bernoulli probabilities")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--out", default=None)
    add_common(p)
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("gen-data", help="synthetic datasets, stores, pools, problems")
    p.add_argument("--kind", choices=("bars-stripes", "clusters", "pool", "problem"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--side", type=int, default=3)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--length", type=int, default=2)
    p.add_argument("--vocab", type=int, default=4)
    p.add_argument("--size", type=int, default=12)
    add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("bench", help="per-backend runtime and hit-rate report")
    p.add_argument("--sizes", default="8,12,16")
    p.add_argument("--instances", type=int, default=3)
    p.add_argument("--reads", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    add_schedule(p)
    p.add_argument("--out", default=None)
    p.add_argument("--figures", default=None)
    p.add_argument("--no-figure", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    started = time.time()
    try:
        inputs, outputs = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (KppError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        _write_manifest(args, inputs, outputs, started)
    except OSError as exc:
        print(f"error writing manifest: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())

"""Command-line surface.

Subcommands: ``distill``, ``eval``, ``sweep``, ``spectrum``, ``sample``,
``ngram train|eval``, ``pfa gen``.  Oracles are addressed by spec strings:

    wa:<file>        in-process automaton document
    ngram:<file>     in-process n-gram model
    exec:<command>   subprocess speaking the wire protocol on stdio
    tcp:<host:port>  wire protocol over TCP

Human-readable text goes to stderr; data lands in files (automaton
documents, spectrum reports, the append-only report CSV, run manifests).
Each error family has its own exit code.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from threading import Lock

import numpy as np

from . import __version__
from .errors import InvalidInput, WadistillError
from .hankel import fill_hankel, gen_basis_oracle, gen_basis_uniform, read_basis, write_basis
from .metrics import (
    WARanking,
    evaluate_candidate,
    ground_dist_table,
    load_test_set,
    sample_eval_set,
)
from .ngram import NGramOracle, load_ngram, sample_corpus, save_ngram, train_ngram
from .oracle import CachedOracle, WAOracle, sample_from_oracle
from .pautomac import write_pautomac_sequences
from .protocol import ExternalOracle
from .spectral import (
    detect_hankel_rank,
    extract_wa,
    rank_factorize,
    wa_parameter_count,
    write_spectrum_report,
)
from .wa import as_rng, load_wa, random_pfa, save_wa

REPORT_FIELDS = [
    "problem", "strategy", "p", "s", "rank", "metric", "eval_set",
    "value", "hankel_rank", "wa_params", "wall_ms", "status",
]


# -- oracle plumbing -----------------------------------------------------------


def open_oracle(spec: str, *, cache_capacity: int = 1_000_000):
    """Instantiate the oracle an oracle-spec string names."""
    if spec.startswith("wa:"):
        return WAOracle(load_wa(spec[3:]))
    if spec.startswith("ngram:"):
        return NGramOracle(load_ngram(spec[len("ngram:"):]))
    if spec.startswith(("exec:", "tcp:")):
        return CachedOracle(ExternalOracle(spec), capacity=cache_capacity)
    raise InvalidInput(
        f"oracle spec must start with wa:, ngram:, exec: or tcp:, got {spec!r}"
    )


def oracle_identity_hash(spec: str, oracle) -> str:
    digest = hashlib.sha256()
    digest.update(spec.encode("utf-8"))
    prefix, _, path = spec.partition(":")
    if prefix in ("wa", "ngram") and os.path.exists(path):
        with open(path, "rb") as fh:
            digest.update(fh.read())
    inner = getattr(oracle, "inner", oracle)
    hello = getattr(inner, "hello_payload", None)
    if hello is not None:
        digest.update(json.dumps(hello, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


def open_candidate(spec: str):
    """-> (label, ranking provider) for eval-side candidates."""
    if spec.startswith("wa:"):
        return spec, WARanking(load_wa(spec[3:]))
    if spec.startswith("ngram:"):
        return spec, load_ngram(spec[len("ngram:"):])
    raise InvalidInput(f"candidate spec must be wa:<file> or ngram:<file>, got {spec!r}")


# -- report csv ----------------------------------------------------------------


class ReportWriter:
    """Append-only CSV; the header is written once, rows flush immediately."""

    def __init__(self, path):
        self.path = path
        self._lock = Lock()
        need_header = not (os.path.exists(path) and os.path.getsize(path) > 0)
        self._fh = open(path, "a", newline="", encoding="utf-8")
        self._writer = csv.DictWriter(self._fh, fieldnames=REPORT_FIELDS)
        if need_header:
            self._writer.writeheader()
            self._fh.flush()

    def write(self, **row):
        with self._lock:
            self._writer.writerow({k: row.get(k, "") for k in REPORT_FIELDS})
            self._fh.flush()

    def close(self):
        self._fh.close()


# -- rank schedules --------------------------------------------------------------


def _log_picked(lo: int, hi: int, count: int) -> list:
    """``count`` strictly increasing integers spread geometrically in (lo, hi]."""
    if hi <= lo or count <= 0:
        return []
    out = []
    prev = lo
    for v in np.logspace(np.log10(lo + 1), np.log10(hi), count):
        iv = max(int(round(v)), prev + 1)
        if iv > hi:
            break
        out.append(iv)
        prev = iv
    return out


def spice_rank_schedule(max_rank: int) -> list:
    """Every rank up to 15, then 25 geometrically spread up to the cap."""
    low = list(range(1, min(15, max_rank) + 1))
    return low + _log_picked(15, max_rank, 25)


def pautomac_rank_schedule(max_rank: int) -> list:
    """20 evenly spread ranks below 50, then 5 geometrically up to the cap."""
    hi = min(49, max_rank)
    low = sorted({max(1, int(round(v))) for v in np.linspace(1, hi, min(20, hi))})
    return low + _log_picked(max(low), max_rank, 5)


def parse_ranks(text: str, max_rank: int) -> list:
    if text == "spice":
        ranks = spice_rank_schedule(max_rank)
    elif text == "pautomac":
        ranks = pautomac_rank_schedule(max_rank)
    else:
        try:
            ranks = []
            for part in text.split(","):
                part = part.strip()
                if "-" in part and not part.startswith("-"):
                    lo, hi = part.split("-")
                    ranks.extend(range(int(lo), int(hi) + 1))
                elif part:
                    ranks.append(int(part))
        except ValueError:
            raise InvalidInput(f"cannot parse rank list {text!r}") from None
    ranks = sorted({r for r in ranks if 1 <= r <= max_rank})
    if not ranks:
        raise InvalidInput("rank list is empty after filtering")
    return ranks


# -- shared pipeline pieces ------------------------------------------------------


def _generate_basis(args, oracle):
    if getattr(args, "basis_in", None):
        return read_basis(args.basis_in, oracle.alphabet)
    if args.strategy == "uniform":
        return gen_basis_uniform(
            oracle.alphabet, args.p, args.s, args.max_len, args.seed_basis
        )
    return gen_basis_oracle(oracle, args.p, args.s, args.max_len, args.seed_basis)


def _write_manifest(path, args, extra):
    manifest = {
        "tool_version": __version__,
        "argv": sys.argv[1:],
        **extra,
    }
    for key in ("p", "s", "max_len", "strategy", "rank", "threshold_decades",
                "seed_basis", "seed_eval", "n_eval"):
        if hasattr(args, key):
            manifest[key] = getattr(args, key)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _log(msg: str):
    print(msg, file=sys.stderr)


# -- subcommands -----------------------------------------------------------------


def cmd_distill(args) -> int:
    started = time.monotonic()
    oracle = open_oracle(args.oracle)
    with oracle:
        basis = _generate_basis(args, oracle)
        if args.rank > min(basis.p, basis.s):
            raise InvalidInput(
                f"rank {args.rank} exceeds the basis (p={basis.p}, s={basis.s})"
            )
        _log(f"basis ready: p={basis.p} s={basis.s}")
        blocks = fill_hankel(oracle, basis, checkpoint_path=args.checkpoint)
        _log("blocks filled, factorizing")
        fact = rank_factorize(blocks.H, args.rank)
        wa = extract_wa(blocks, args.rank, fact)
        report = detect_hankel_rank(fact.singular_values, args.threshold_decades)
        save_wa(wa, args.wa_out)
        if args.spectrum_out:
            write_spectrum_report(report, args.spectrum_out)
        if args.basis_out:
            write_basis(basis, args.basis_out)
        manifest_path = args.manifest_out or args.wa_out + ".manifest.json"
        _write_manifest(manifest_path, args, {
            "command": "distill",
            "oracle": {"spec": args.oracle, "hash": oracle_identity_hash(args.oracle, oracle)},
            "achieved_p": basis.p,
            "achieved_s": basis.s,
            "hankel_rank": report.hankel_rank,
            "wall_ms": int(1000 * (time.monotonic() - started)),
        })
    _log(
        f"distilled rank-{args.rank} automaton -> {args.wa_out} "
        f"(hankel rank {report.hankel_rank})"
    )
    return 0


def _run_eval(args, ground, candidates, writer, problem):
    """Evaluate candidate rankings on the requested eval sets, append rows."""
    eval_sets = []
    if getattr(args, "test_file", None):
        eval_sets.append(("S_Test", load_test_set(args.test_file, ground.alphabet)))
    eval_sets.append(
        ("S_RNN", sample_eval_set(ground, args.n_eval, args.max_len, args.seed_eval))
    )
    n = args.ndcg_n
    for set_name, eval_set in eval_sets:
        dists = ground_dist_table(ground, eval_set)
        for label, ranking in candidates:
            started = time.monotonic()
            debug_rows = [] if getattr(args, "debug_dump", None) else None
            results = evaluate_candidate(
                ground, ranking, eval_set, n, ground_dists=dists, debug_rows=debug_rows
            )
            wall = int(1000 * (time.monotonic() - started))
            for metric in results.values():
                _log(
                    f"{problem} {label} {set_name} {metric.name}={metric.value:.4f} "
                    f"({metric.prefix_count} prefixes)"
                )
                if writer is not None:
                    writer.write(
                        problem=problem, strategy="", p="", s="", rank="",
                        metric=metric.name, eval_set=set_name,
                        value=f"{metric.value:.6f}", hankel_rank="", wa_params="",
                        wall_ms=wall, status="ok",
                    )
            if debug_rows is not None:
                with open(args.debug_dump, "a", encoding="utf-8") as fh:
                    for row in debug_rows:
                        fh.write("\t".join(map(str, row)) + "\n")
    return 0


def cmd_eval(args) -> int:
    ground = open_oracle(args.oracle)
    label, ranking = open_candidate(args.candidate)
    writer = ReportWriter(args.report) if args.report else None
    try:
        with ground:
            return _run_eval(
                args, ground, [(label, ranking)], writer,
                args.problem or os.path.basename(args.oracle),
            )
    finally:
        if writer:
            writer.close()


def _sweep_one(args, writer, problem, strategy, p, s):
    oracle = open_oracle(args.oracle)
    with oracle:
        if strategy == "uniform":
            basis = gen_basis_uniform(oracle.alphabet, p, s, args.max_len, args.seed_basis)
        else:
            basis = gen_basis_oracle(oracle, p, s, args.max_len, args.seed_basis)
        fill_start = time.monotonic()
        blocks = fill_hankel(oracle, basis)
        _log(
            f"[{problem}] {strategy} {p}x{s}: filled "
            f"({basis.p}x{basis.s} achieved, {time.monotonic() - fill_start:.1f}s)"
        )
        max_rank = min(basis.p, basis.s)
        fact = rank_factorize(blocks.H, 1)
        spectrum = detect_hankel_rank(fact.singular_values, args.threshold_decades)
        hankel_rank = spectrum.hankel_rank
        ranks = sorted(set(parse_ranks(args.ranks, max_rank)) | {hankel_rank})

        eval_sets = []
        if args.test_file:
            eval_sets.append(("S_Test", load_test_set(args.test_file, oracle.alphabet)))
        eval_sets.append(
            ("S_RNN", sample_eval_set(oracle, args.n_eval, args.max_len, args.seed_eval))
        )
        tables = {name: ground_dist_table(oracle, es) for name, es in eval_sets}

        outcomes = {}  # (metric, set) -> {rank: value}
        for rank in ranks:
            started = time.monotonic()
            wa = extract_wa(blocks, rank, fact)
            params = wa_parameter_count(rank, oracle.alphabet.size)
            ranking = WARanking(wa)
            for set_name, eval_set in eval_sets:
                results = evaluate_candidate(
                    oracle, ranking, eval_set, args.ndcg_n,
                    ground_dists=tables[set_name],
                )
                wall = int(1000 * (time.monotonic() - started))
                for metric in results.values():
                    outcomes.setdefault((metric.name, set_name), {})[rank] = metric.value
                    writer.write(
                        problem=problem, strategy=strategy, p=basis.p, s=basis.s,
                        rank=rank, metric=metric.name, eval_set=set_name,
                        value=f"{metric.value:.6f}", hankel_rank=hankel_rank,
                        wa_params=params, wall_ms=wall, status="ok",
                    )
        for (metric_name, set_name), by_rank in outcomes.items():
            best = max(by_rank.values()) if metric_name.startswith("NDCG") else min(by_rank.values())
            delta = abs(best - by_rank[hankel_rank])
            writer.write(
                problem=problem, strategy=strategy, p=basis.p, s=basis.s,
                rank=hankel_rank, metric=f"delta_{metric_name}", eval_set=set_name,
                value=f"{delta:.6f}", hankel_rank=hankel_rank,
                wa_params=wa_parameter_count(hankel_rank, oracle.alphabet.size),
                wall_ms="", status="ok",
            )


def cmd_sweep(args) -> int:
    if args.config:
        # Config supplies defaults; flags given on the command line win.
        try:
            with open(args.config, encoding="utf-8") as fh:
                conf = json.load(fh)
        except OSError as e:
            raise InvalidInput(f"cannot read config: {e}") from None
        except json.JSONDecodeError as e:
            raise InvalidInput(f"bad config: {e}") from None
        parser = build_parser()
        parser.set_defaults(
            **{k.replace("-", "_"): v for k, v in conf.items()}
        )
        args = parser.parse_args(args._argv)
    sizes = []
    for pair in str(args.basis_sizes).split(","):
        try:
            p_str, s_str = pair.split(":")
            sizes.append((int(p_str), int(s_str)))
        except ValueError:
            raise InvalidInput(f"basis size must be p:s, got {pair!r}") from None
    strategies = [s.strip() for s in str(args.strategies).split(",") if s.strip()]
    for strategy in strategies:
        if strategy not in ("uniform", "oracle"):
            raise InvalidInput(f"unknown basis strategy {strategy!r}")
    problem = args.problem or os.path.basename(args.oracle)
    writer = ReportWriter(args.report)
    configs = [(strategy, p, s) for strategy in strategies for p, s in sizes]

    def run(config):
        strategy, p, s = config
        try:
            _sweep_one(args, writer, problem, strategy, p, s)
        except WadistillError as e:
            _log(f"[{problem}] {strategy} {p}x{s} failed: {e}")
            writer.write(
                problem=problem, strategy=strategy, p=p, s=s, rank="", metric="",
                eval_set="", value="", hankel_rank="", wa_params="", wall_ms="",
                status=f"error:{type(e).__name__}",
            )

    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                list(pool.map(run, configs))
        else:
            for config in configs:
                run(config)
    finally:
        writer.close()
    return 0


def cmd_spectrum(args) -> int:
    oracle = open_oracle(args.oracle)
    with oracle:
        basis = _generate_basis(args, oracle)
        blocks = fill_hankel(oracle, basis)
        fact = rank_factorize(blocks.H, 1)
        report = detect_hankel_rank(fact.singular_values, args.threshold_decades)
        write_spectrum_report(report, args.out)
    _log(
        f"spectrum of {basis.p}x{basis.s} block -> {args.out} "
        f"(hankel rank {report.hankel_rank}, threshold {args.threshold_decades})"
    )
    return 0


def cmd_sample(args) -> int:
    oracle = open_oracle(args.oracle)
    with oracle:
        rng = as_rng(args.seed)
        seqs = [sample_from_oracle(oracle, rng, args.max_len) for _ in range(args.n)]
        write_pautomac_sequences(args.out, seqs, oracle.alphabet.size)
    _log(f"sampled {len(seqs)} sequences -> {args.out}")
    return 0


def cmd_ngram_train(args) -> int:
    oracle = open_oracle(args.oracle)
    with oracle:
        corpus = sample_corpus(oracle, args.budget, args.max_len, args.seed)
        model = train_ngram(corpus, args.n, oracle.alphabet)
    save_ngram(model, args.out)
    _log(
        f"trained window-{args.n} model on {len(corpus)} sequences "
        f"({model.total_symbols} symbols) -> {args.out}"
    )
    return 0


def cmd_ngram_eval(args) -> int:
    ground = open_oracle(args.oracle)
    model = load_ngram(args.model, ground.alphabet)
    writer = ReportWriter(args.report) if args.report else None
    try:
        with ground:
            return _run_eval(
                args, ground, [(f"ngram:{args.model}", model)], writer,
                args.problem or os.path.basename(args.oracle),
            )
    finally:
        if writer:
            writer.close()


def cmd_pfa_gen(args) -> int:
    wa = random_pfa(
        args.states, args.alphabet_size,
        args.symbol_sparsity, args.transition_sparsity, args.seed,
    )
    save_wa(wa, args.wa_out)
    _log(f"generated {args.states}-state machine over {args.alphabet_size} symbols -> {args.wa_out}")
    return 0


# -- parser ----------------------------------------------------------------------


def _common_oracle(sub):
    sub.add_argument("--oracle", required=True,
                     help="wa:<file> | ngram:<file> | exec:<cmd> | tcp:<host:port>")
    sub.add_argument("--problem", default=None, help="label for report rows")


def _common_basis(sub):
    sub.add_argument("--p", type=int, default=100, help="prefix count target")
    sub.add_argument("--s", type=int, default=100, help="suffix count target")
    sub.add_argument("--max-len", type=int, default=100, dest="max_len")
    sub.add_argument("--strategy", choices=("uniform", "oracle"), default="oracle")
    sub.add_argument("--seed-basis", type=int, default=0, dest="seed_basis")
    sub.add_argument("--basis-in", default=None, dest="basis_in",
                     help="load the basis from a file instead of sampling")
    sub.add_argument("--threshold-decades", type=float, default=2.0,
                     dest="threshold_decades",
                     help="log10 drop that ends the significant spectrum")


def _common_eval(sub):
    sub.add_argument("--test-file", default=None, dest="test_file",
                     help="sequence file for the S_Test evaluation set")
    sub.add_argument("--n-eval", type=int, default=1000, dest="n_eval",
                     help="sequences sampled for the S_RNN evaluation set")
    sub.add_argument("--seed-eval", type=int, default=1, dest="seed_eval")
    sub.add_argument("--max-len", type=int, default=100, dest="max_len")
    sub.add_argument("--ndcg-n", type=int, default=5, dest="ndcg_n")
    sub.add_argument("--report", default=None, help="append rows to this CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wadistill",
        description="Distill weighted automata from black-box sequence oracles.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    distill = commands.add_parser("distill", help="basis + fill + extraction")
    _common_oracle(distill)
    _common_basis(distill)
    distill.add_argument("--rank", type=int, required=True)
    distill.add_argument("--wa-out", required=True, dest="wa_out")
    distill.add_argument("--spectrum-out", default=None, dest="spectrum_out")
    distill.add_argument("--basis-out", default=None, dest="basis_out")
    distill.add_argument("--manifest-out", default=None, dest="manifest_out")
    distill.add_argument("--checkpoint", default=None,
                         help="fill checkpoint file (resume + crash safety)")
    distill.set_defaults(func=cmd_distill)

    evaluate = commands.add_parser("eval", help="score a candidate against an oracle")
    _common_oracle(evaluate)
    evaluate.add_argument("--candidate", required=True,
                          help="wa:<file> | ngram:<file>")
    _common_eval(evaluate)
    evaluate.add_argument("--debug-dump", default=None, dest="debug_dump",
                          help="per-prefix TSV dump")
    evaluate.set_defaults(func=cmd_eval)

    sweep = commands.add_parser("sweep", help="basis-size x rank grid into a report")
    _common_oracle(sweep)
    sweep.add_argument("--config", default=None, help="JSON file mirroring the flags")
    sweep.add_argument("--basis-sizes", default="100:100", dest="basis_sizes",
                       help="comma-separated p:s pairs")
    sweep.add_argument("--strategies", default="oracle",
                       help="comma-separated subset of uniform,oracle")
    sweep.add_argument("--ranks", default="spice",
                       help="'spice', 'pautomac', or list like 1,2,4-8,16")
    sweep.add_argument("--max-len", type=int, default=100, dest="max_len")
    sweep.add_argument("--seed-basis", type=int, default=0, dest="seed_basis")
    sweep.add_argument("--threshold-decades", type=float, default=2.0,
                       dest="threshold_decades")
    sweep.add_argument("--test-file", default=None, dest="test_file")
    sweep.add_argument("--n-eval", type=int, default=1000, dest="n_eval")
    sweep.add_argument("--seed-eval", type=int, default=1, dest="seed_eval")
    sweep.add_argument("--ndcg-n", type=int, default=5, dest="ndcg_n")
    sweep.add_argument("--report", required=True)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    spectrum = commands.add_parser("spectrum", help="singular values of one filled block")
    _common_oracle(spectrum)
    _common_basis(spectrum)
    spectrum.add_argument("--out", required=True)
    spectrum.set_defaults(func=cmd_spectrum)

    sample = commands.add_parser("sample", help="sample sequences into a file")
    _common_oracle(sample)
    sample.add_argument("--n", type=int, default=1000)
    sample.add_argument("--max-len", type=int, default=100, dest="max_len")
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", required=True)
    sample.set_defaults(func=cmd_sample)

    ngram = commands.add_parser("ngram", help="n-gram baseline")
    ngram_sub = ngram.add_subparsers(dest="ngram_command", required=True)
    train = ngram_sub.add_parser("train", help="sample a corpus and count")
    _common_oracle(train)
    train.add_argument("--n", type=int, default=3, help="window size")
    train.add_argument("--budget", type=int, default=100_000,
                       help="total symbols to sample before training")
    train.add_argument("--max-len", type=int, default=100, dest="max_len")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_ngram_train)
    ngram_eval = ngram_sub.add_parser("eval", help="score a model against an oracle")
    _common_oracle(ngram_eval)
    ngram_eval.add_argument("--model", required=True)
    _common_eval(ngram_eval)
    ngram_eval.set_defaults(func=cmd_ngram_eval)

    pfa = commands.add_parser("pfa", help="random stochastic machines")
    pfa_sub = pfa.add_subparsers(dest="pfa_command", required=True)
    gen = pfa_sub.add_parser("gen", help="generate a random machine")
    gen.add_argument("--states", type=int, required=True)
    gen.add_argument("--alphabet-size", type=int, required=True, dest="alphabet_size")
    gen.add_argument("--symbol-sparsity", type=float, default=1.0, dest="symbol_sparsity")
    gen.add_argument("--transition-sparsity", type=float, default=1.0,
                     dest="transition_sparsity")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--wa-out", required=True, dest="wa_out")
    gen.set_defaults(func=cmd_pfa_gen)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = list(argv)
    try:
        return args.func(args)
    except WadistillError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: gen, spectrum, kernel, embed, pipeline, selfcheck.
Exit codes: 0 success, 1 computation error, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .classify_eval import SplitSpec
from .errors import ConfigError, LorentzSeqError
from .hyperboloid import (
    KernelKind,
    PSDMode,
    format_kernel_csv,
    kernel_matrix,
    psd_adjust,
    read_kernel_binary,
    write_kernel_binary,
)
from .io_sequences import (
    Alphabet,
    AmbiguityPolicy,
    dataset_stats,
    format_fasta,
    read_fasta,
    read_labels,
    validate_records,
)
from .kernel_pca import KPCATransform, format_eigenvalues_csv, format_embedding_tsv, project
from .pipeline import ExperimentConfig, heatmap_for, evaluate_runs, prepare
from .selfcheck import CHECKS, run_selfcheck
from .spectrum import format_spectrum_tsv, spectrum_matrix, write_spectrum_binary
from .synth import mutation_tree_dataset

logger = logging.getLogger("lorentzseq")

THREADS_ENV = "LORENTZSEQ_THREADS"
# largest spectrum dimension accepted without --allow-large-k (4^8 DNA, 20^4 protein)
MAX_K = {"dna": 8, "protein": 4}
MAX_CUSTOM_DIM = 20**4


class Artifacts:
    """Tracks files written by one command and deletes them if the command fails."""

    def __init__(self, out: Path):
        self.out = out
        self.written: list[Path] = []

    def __enter__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        return self

    def write(self, name: str, content) -> Path:
        path = self.out / name
        self.written.append(path)
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content)
        return path

    def digests(self) -> dict:
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in self.written}

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.written:
                p.unlink(missing_ok=True)
        return False


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _fraction(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not (v > 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return v


def _alphabet(text):
    try:
        Alphabet.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def resolve_threads(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            v = int(env)
            if v >= 1:
                return v
        except ValueError:
            pass
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorentzseq",
        description="Hyperboloid-distance kernels for k-mer based sequence classification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or all cores)")

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("--fasta", type=Path, help="input FASTA file")
    inputs.add_argument("--labels", type=Path, help="id,label CSV")

    spec = argparse.ArgumentParser(add_help=False)
    spec.add_argument("--k", type=_positive_int, default=3, help="k-mer length (default 3)")
    spec.add_argument("--alphabet", type=_alphabet, default="dna",
                      help="dna, protein or custom:<chars> (default dna)")
    spec.add_argument("--ambiguity", choices=[p.value for p in AmbiguityPolicy], default="mask",
                      help="non-alphabet residues: mask k-mers over them, or reject the input")
    norm = spec.add_mutually_exclusive_group()
    norm.add_argument("--normalize", dest="normalize", action="store_true", default=True,
                      help="k-mer frequencies (default)")
    norm.add_argument("--raw-counts", dest="normalize", action="store_false",
                      help="raw k-mer counts")
    spec.add_argument("--allow-large-k", action="store_true",
                      help="lift the k <= 8 (DNA) / k <= 4 (protein) guard")

    kern = argparse.ArgumentParser(add_help=False)
    kern.add_argument("--kernel", choices=[k.value for k in KernelKind], default="hyperboloid")
    kern.add_argument("--lift-scale", type=_positive_float, default=1.0,
                      help="multiply spectra by this before lifting (default 1)")
    kern.add_argument("--psd", choices=[m.value for m in PSDMode], default="clip")

    kpca = argparse.ArgumentParser(add_help=False)
    kpca.add_argument("--kpca-transform", choices=[t.value for t in KPCATransform], default="raw")
    kpca.add_argument("--components", type=_positive_int, default=100,
                      help="kernel-PCA components, capped at n-1 (default 100)")

    p = sub.add_parser("gen", parents=[common], help="write a synthetic mutation-tree dataset")
    p.add_argument("--n", type=_positive_int, default=400)
    p.add_argument("--length", type=_positive_int, default=300)
    p.add_argument("--clades", type=_positive_int, default=4)
    p.add_argument("--mu-within", type=float, default=0.02)
    p.add_argument("--mu-between", type=float, default=0.15)
    p.add_argument("--depth", type=_positive_int, default=1,
                   help="levels of binary branching inside each clade")
    p.add_argument("--alphabet", type=_alphabet, default="dna")
    p.add_argument("--seed", type=_nonneg_int, default=0)

    sub.add_parser("spectrum", parents=[common, inputs, spec], help="k-mer spectrum matrix")
    sub.add_parser("kernel", parents=[common, inputs, spec, kern],
                   help="pairwise kernel matrix").add_argument(
        "--csv", action="store_true", help="also write kernel.csv")

    p = sub.add_parser("embed", parents=[common, inputs, spec, kern, kpca],
                       help="kernel-PCA embedding")
    p.add_argument("--kernel-file", type=Path,
                   help="embed an existing HKM1 kernel instead of computing one")

    p = sub.add_parser("pipeline", parents=[common, inputs, spec, kern, kpca],
                       help="full classification experiment")
    p.add_argument("--classifier", choices=["knn", "centroid"], default="knn")
    p.add_argument("--neighbors", type=_positive_int, default=5)
    p.add_argument("--test-fraction", type=_fraction, default=0.3)
    p.add_argument("--runs", type=_positive_int, default=5)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--no-stratify", dest="stratified", action="store_false")

    p = sub.add_parser("selfcheck", help="run the built-in invariant suite")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out", type=Path, help="optional directory for a manifest")
    p.add_argument("--inject-fault", action="append", default=[], choices=sorted(CHECKS),
                   help=argparse.SUPPRESS)
    return parser


def _check_k(args):
    alphabet = Alphabet.parse(args.alphabet)
    if args.allow_large_k:
        return
    name = alphabet.name
    limit_ok = (args.k <= MAX_K[name]) if name in MAX_K else len(alphabet) ** args.k <= MAX_CUSTOM_DIM
    if not limit_ok:
        raise ConfigError(f"k={args.k} gives a {len(alphabet)}^{args.k}-dimensional spectrum; "
                          "pass --allow-large-k to proceed")


def _require_file(path: Optional[Path], flag: str) -> Path:
    if path is None:
        raise ConfigError(f"{flag} is required")
    if not path.is_file():
        raise ConfigError(f"{flag}: no such file: {path}")
    return path


def _load_records(args, need_labels: bool):
    fasta = _require_file(args.fasta, "--fasta")
    labels = None
    if args.labels is not None or need_labels:
        labels = read_labels(_require_file(args.labels, "--labels"))
    records = read_fasta(fasta)
    alphabet = Alphabet.parse(args.alphabet)
    return validate_records(records, labels, alphabet, AmbiguityPolicy(args.ambiguity))


def _manifest(args, extra: dict) -> dict:
    argv = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k not in ("inject_fault",)}
    return {"tool": "lorentzseq", "version": __version__, "command": args.command,
            "arguments": argv, **extra}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_gen(args, threads):
    records = mutation_tree_dataset(
        n=args.n, length=args.length, clades=args.clades, mu_within=args.mu_within,
        mu_between=args.mu_between, alphabet=Alphabet.parse(args.alphabet), seed=args.seed,
        depth=args.depth)
    with Artifacts(args.out) as art:
        art.write("sequences.fasta", format_fasta(records))
        art.write("labels.csv", "id,label\n" + "".join(f"{r.id},{r.label}\n" for r in records))
        art.write("manifest.json", _dump(_manifest(args, {
            "dataset": dataset_stats(records), "outputs": art.digests()})))
    return 0


def _spectra(args, records, threads):
    return spectrum_matrix(records, args.k, Alphabet.parse(args.alphabet),
                           AmbiguityPolicy(args.ambiguity), args.normalize, workers=threads)


def cmd_spectrum(args, threads):
    _check_k(args)
    records = _load_records(args, need_labels=False)
    S = _spectra(args, records, threads)
    alphabet = Alphabet.parse(args.alphabet)
    with Artifacts(args.out) as art:
        art.write("spectrum.tsv", format_spectrum_tsv(S, [r.id for r in records], alphabet, args.k))
        art.write("spectrum.hsm", write_spectrum_binary(S))
        art.write("manifest.json", _dump(_manifest(args, {
            "dataset": dataset_stats(records, args.k), "spectrum_shape": list(S.shape),
            "outputs": art.digests()})))
    return 0


def cmd_kernel(args, threads):
    _check_k(args)
    records = _load_records(args, need_labels=False)
    S = _spectra(args, records, threads)
    K = psd_adjust(kernel_matrix(S, args.kernel, workers=threads, lift_scale=args.lift_scale),
                   args.psd)
    with Artifacts(args.out) as art:
        art.write("kernel.hkm", _kernel_bytes(K))
        if args.csv:
            art.write("kernel.csv", format_kernel_csv(K))
        art.write("manifest.json", _dump(_manifest(args, {
            "dataset": dataset_stats(records, args.k), "n": K.n, "kind_code": K.kind_code,
            "diag_shift": K.diag_shift, "outputs": art.digests()})))
    return 0


def _kernel_bytes(K) -> bytes:
    import io

    buf = io.BytesIO()
    write_kernel_binary(K, buf)
    return buf.getvalue()


def cmd_embed(args, threads):
    if args.kernel_file is not None:
        K = read_kernel_binary(_require_file(args.kernel_file, "--kernel-file"))
        ids = ([r.id for r in read_fasta(args.fasta)] if args.fasta is not None
               else [str(i) for i in range(K.n)])
        if len(ids) != K.n:
            raise ConfigError(f"--fasta has {len(ids)} records but the kernel is {K.n} x {K.n}")
        stats = {"n": K.n}
    else:
        _check_k(args)
        records = _load_records(args, need_labels=False)
        K = kernel_matrix(_spectra(args, records, threads), args.kernel, workers=threads,
                          lift_scale=args.lift_scale)
        ids = [r.id for r in records]
        stats = dataset_stats(records, args.k)
    if K.n < 2:
        raise ConfigError("need at least 2 items to embed")
    m = min(args.components, K.n - 1)
    emb = project(K, m, args.psd, args.kpca_transform)
    if emb.degenerate:
        raise LorentzSeqError("kernel PCA retained no component; try --kpca-transform mds")
    with Artifacts(args.out) as art:
        art.write("embedding.tsv", format_embedding_tsv(emb, ids))
        art.write("eigenvalues.csv", format_eigenvalues_csv(emb))
        art.write("manifest.json", _dump(_manifest(args, {
            "dataset": stats, "components_retained": emb.m,
            "eigenvalues_dropped_negative": emb.dropped_negative,
            "diag_shift": emb.diag_shift, "outputs": art.digests()})))
    return 0


def config_from_args(args, threads) -> ExperimentConfig:
    return ExperimentConfig(
        k=args.k, alphabet=args.alphabet, ambiguity=args.ambiguity, normalize=args.normalize,
        lift_scale=args.lift_scale, kernel=args.kernel, psd=args.psd,
        kpca_transform=args.kpca_transform, components=args.components,
        classifier=args.classifier, neighbors=args.neighbors,
        split=SplitSpec(args.test_fraction, args.runs, args.seed, args.stratified),
        threads=threads)


def cmd_pipeline(args, threads):
    _check_k(args)
    config = config_from_args(args, threads)
    records = _load_records(args, need_labels=True)
    prepared = prepare(records, config)
    report = evaluate_runs(prepared, config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        heat = heatmap_for(prepared)
    with Artifacts(args.out) as art:
        art.write("report.json", _dump(report.to_dict()))
        art.write("embedding.tsv", format_embedding_tsv(prepared.embedding, prepared.ids))
        art.write("eigenvalues.csv", format_eigenvalues_csv(prepared.embedding))
        art.write("heatmap.csv", heat.to_csv())
        art.write("metrics.tsv", report.metrics_tsv())
        art.write("timings.json", _dump(report.timing_summary()))
        art.write("kernel.hkm", _kernel_bytes(prepared.kernel))
        art.write("manifest.json", _dump(_manifest(args, {
            "config": config.echo(), "notes": prepared.notes, "outputs": art.digests()})))
    mean, sd = report.summary("accuracy")
    print(f"accuracy {mean:.4f} +/- {sd:.4f} over {report.runs} runs")
    return 0


def cmd_selfcheck(args, threads):
    t0 = time.perf_counter()
    results = run_selfcheck(args.seed, args.inject_fault)
    elapsed = time.perf_counter() - t0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<22} {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties hold ({elapsed:.1f}s)")
    if args.out is not None:
        with Artifacts(args.out) as art:
            art.write("manifest.json", _dump(_manifest(args, {
                "results": [{"name": r.name, "passed": r.passed, "detail": r.detail}
                            for r in results],
                "elapsed_sec": round(elapsed, 3), "budget_sec": 60})))
    if failed:
        print("failing properties: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "spectrum": cmd_spectrum,
    "kernel": cmd_kernel,
    "embed": cmd_embed,
    "pipeline": cmd_pipeline,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = resolve_threads(getattr(args, "threads", None))
        return COMMANDS[args.command](args, threads)
    except LorentzSeqError as exc:
        print(f"lorentzseq {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"lorentzseq {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end for the distillation and evaluation pipeline.

Every pipeline stage is a subcommand driven by one YAML project config;
individual flags override config values. Stages write their artifacts
plus a run manifest (input/output hashes, package version, seed) under
the project output directory, and are byte-identical across reruns with
the same inputs and seed.

Exit codes: 0 success, 1 usage or configuration error, 2 partial
pipeline failure (some records errored), 3 total failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .corpus import Corpus, CorpusError, filter_difficulty, load_benchmark, load_corpus, save_corpus
from .distillery import (
    DEFAULT_SEED,
    VARIANTS,
    TrainingConfig,
    distill,
    emit_sft,
    emit_training_config,
    grade_generation,
    load_trajectories,
    partition,
)
from .inference import (
    FINISH_ERROR,
    EndpointConfig,
    InferenceError,
    SamplingProfile,
    distill_profile,
    error_count,
    eval_profile,
    load_results,
)
from .metrics import (
    ReportRow,
    RgrInputs,
    SampleTally,
    build_report,
    length_stats,
    load_tallies,
    pass_at_k,
    rgr,
    save_tallies,
)
from .mock_server import load_script, serve
from .prompts import load_template, select_template

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_FAILURE = 3


class UsageError(Exception):
    """Bad flags or configuration."""


@dataclass(frozen=True)
class EndpointSection:
    config: EndpointConfig
    api: str = "chat"
    template: str = "auto"

    def template_id(self, overrides: dict[str, str]) -> str:
        if self.template != "auto":
            return self.template
        return select_template(self.config.model, mapping=overrides)


@dataclass(frozen=True)
class ProjectConfig:
    """Validated view of the project YAML file."""

    output_dir: Path
    seed: int = DEFAULT_SEED
    corpus_path: Path | None = None
    corpus_adapter: str = "generic_jsonl"
    corpus_subset: str | None = None
    max_malformed: int = 0
    min_difficulty: int | None = None
    max_difficulty: int | None = None
    teacher: EndpointSection | None = None
    student: EndpointSection | None = None
    distill_sampling: SamplingProfile | None = None
    eval_sampling: SamplingProfile | None = None
    template_overrides: dict[str, str] = field(default_factory=dict)

    def require_teacher(self) -> EndpointSection:
        if self.teacher is None:
            raise UsageError("config has no [teacher] endpoint section")
        return self.teacher

    def require_student(self) -> EndpointSection:
        if self.student is None:
            raise UsageError("config has no [student] endpoint section")
        return self.student

    def require_corpus_path(self) -> Path:
        if self.corpus_path is None:
            raise UsageError("config has no corpus.path")
        return self.corpus_path


def _endpoint_section(raw: dict, name: str) -> EndpointSection:
    try:
        config = EndpointConfig(
            base_url=raw["base_url"],
            model=raw["model"],
            auth_token_ref=raw.get("auth_token_ref"),
            timeout=float(raw.get("timeout", 120.0)),
            max_parallel=int(raw.get("max_parallel", 4)),
            max_retries=int(raw.get("max_retries", 2)),
            backoff_base=float(raw.get("backoff_base", 0.5)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad {name} endpoint config: {exc}") from exc
    api = raw.get("api", "chat")
    if api not in ("chat", "completions"):
        raise UsageError(f"{name}.api must be chat or completions, got {api!r}")
    template = raw.get("template", "auto")
    if template not in ("auto", "simple", "complex"):
        raise UsageError(f"{name}.template must be auto, simple, or complex")
    return EndpointSection(config=config, api=api, template=template)


def _profile(raw: dict | None, base: SamplingProfile, seed: int) -> SamplingProfile:
    raw = raw or {}
    try:
        return SamplingProfile(
            temperature=float(raw.get("temperature", base.temperature)),
            top_p=float(raw.get("top_p", base.top_p)),
            max_tokens=int(raw.get("max_tokens", base.max_tokens)),
            n_samples=int(raw.get("n_samples", base.n_samples)),
            seed=int(raw["seed"]) if "seed" in raw else seed,
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sampling profile: {exc}") from exc


def load_project_config(path: str | Path) -> ProjectConfig:
    """Parse and validate the project YAML file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a mapping")

    if "output_dir" not in raw:
        raise UsageError("config needs an output_dir")
    seed = int(raw.get("seed", DEFAULT_SEED))

    corpus_section = raw.get("corpus") or {}
    corpus_path = corpus_section.get("path")
    profiles = raw.get("profiles") or {}

    config = ProjectConfig(
        output_dir=Path(raw["output_dir"]),
        seed=seed,
        corpus_path=Path(corpus_path) if corpus_path else None,
        corpus_adapter=corpus_section.get("adapter", "generic_jsonl"),
        corpus_subset=corpus_section.get("subset"),
        max_malformed=int(corpus_section.get("max_malformed", 0)),
        min_difficulty=corpus_section.get("min_difficulty"),
        max_difficulty=corpus_section.get("max_difficulty"),
        teacher=_endpoint_section(raw["teacher"], "teacher") if raw.get("teacher") else None,
        student=_endpoint_section(raw["student"], "student") if raw.get("student") else None,
        distill_sampling=_profile(profiles.get("distill"), distill_profile(), seed),
        eval_sampling=_profile(profiles.get("eval"), eval_profile(), seed),
        template_overrides=dict(raw.get("template_overrides") or {}),
    )
    if config.corpus_path is not None and not config.corpus_path.exists():
        raise UsageError(f"corpus path does not exist: {config.corpus_path}")
    return config


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest_key(path: Path, output_dir: Path) -> str:
    """Output-dir-relative key so manifests are location-independent."""
    try:
        return path.resolve().relative_to(output_dir.resolve()).as_posix()
    except ValueError:
        return path.name


def _write_manifest(
    config: ProjectConfig,
    command: str,
    inputs: list[Path],
    outputs: list[Path],
) -> Path:
    out_dir = config.output_dir
    manifest = {
        "command": command,
        "version": __version__,
        "seed": config.seed,
        "inputs": {_manifest_key(p, out_dir): _sha256(p) for p in sorted(inputs) if p.exists()},
        "outputs": {_manifest_key(p, out_dir): _sha256(p) for p in sorted(outputs) if p.exists()},
    }
    path = out_dir / f"manifest_{command.replace('-', '_')}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# Stage artifact locations under the project output directory.
def _corpus_artifact(config: ProjectConfig) -> Path:
    return config.output_dir / "corpus_normalized.jsonl"


def _trajectories_artifact(config: ProjectConfig) -> Path:
    return config.output_dir / "trajectories.jsonl"


def _load_stage_corpus(config: ProjectConfig) -> Corpus:
    """Use the ingested corpus when present, else ingest from source."""
    artifact = _corpus_artifact(config)
    if artifact.exists():
        return load_corpus(artifact)
    return _ingest_corpus(config)


def _ingest_corpus(config: ProjectConfig) -> Corpus:
    corpus = load_benchmark(
        config.require_corpus_path(),
        config.corpus_adapter,
        max_malformed=config.max_malformed,
        subset=config.corpus_subset,
    )
    if config.min_difficulty is not None or config.max_difficulty is not None:
        low = config.min_difficulty if config.min_difficulty is not None else 1
        high = config.max_difficulty if config.max_difficulty is not None else 5
        corpus = filter_difficulty(corpus, low, high)
    return corpus


def cmd_ingest(config: ProjectConfig, args: argparse.Namespace) -> int:
    corpus = _ingest_corpus(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    artifact = _corpus_artifact(config)
    save_corpus(corpus, artifact)

    log_lines = []
    for note in corpus.source_manifest:
        log_lines.append(
            f"{note.path} adapter={note.adapter} loaded={note.loaded} skipped={note.skipped}"
        )
        log_lines.extend(f"  skip: {reason}" for reason in note.skip_reasons)
        log_lines.extend(f"  note: {extra}" for extra in note.notes)
    log_path = config.output_dir / "ingest.log"
    log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    _write_manifest(config, "ingest", [config.require_corpus_path()], [artifact, log_path])
    print(f"ingested {len(corpus)} record(s) -> {artifact}")
    return EXIT_OK


def cmd_distill(config: ProjectConfig, args: argparse.Namespace) -> int:
    teacher = config.require_teacher()
    corpus = _load_stage_corpus(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    checkpoints = config.output_dir / "checkpoints"
    checkpoints.mkdir(exist_ok=True)
    template = load_template(teacher.template_id(config.template_overrides))
    artifact = _trajectories_artifact(config)

    records = distill(
        corpus,
        teacher.config,
        config.distill_sampling,
        template,
        api=teacher.api,
        trajectories_path=artifact,
        checkpoint_path=checkpoints / "distill.jsonl",
    )
    _write_manifest(config, "distill", [_corpus_artifact(config)], [artifact])
    errors = sum(1 for r in records if r.finish_reason == FINISH_ERROR)
    correct = sum(1 for r in records if r.verdict and r.verdict.is_correct)
    print(f"distilled {len(records)} trajectory(ies), {correct} correct -> {artifact}")
    if errors:
        print(f"warning: {errors} record(s) failed generation", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_partition(config: ProjectConfig, args: argparse.Namespace) -> int:
    trajectories_path = Path(args.trajectories) if args.trajectories else _trajectories_artifact(config)
    if not trajectories_path.exists():
        raise UsageError(f"no trajectory file at {trajectories_path}; run distill first")
    records = load_trajectories(trajectories_path)
    result = partition(records)
    total, positive, negative = result.counts()

    config.output_dir.mkdir(parents=True, exist_ok=True)
    artifact = config.output_dir / "partition.json"
    payload = {
        "counts": {"all": total, "positive": positive, "negative": negative},
        "positive_ids": [r.problem_id for r in result.positive],
        "negative_ids": [r.problem_id for r in result.negative],
    }
    artifact.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(config, "partition", [trajectories_path], [artifact])
    print(f"partition: all={total} positive={positive} negative={negative} -> {artifact}")
    return EXIT_OK


def cmd_emit_sft(config: ProjectConfig, args: argparse.Namespace) -> int:
    trajectories_path = Path(args.trajectories) if args.trajectories else _trajectories_artifact(config)
    if not trajectories_path.exists():
        raise UsageError(f"no trajectory file at {trajectories_path}; run distill first")
    records = load_trajectories(trajectories_path)
    result = partition(records)
    out = Path(args.out) if args.out else config.output_dir / f"sft_{args.variant}.jsonl"
    try:
        stats = emit_sft(result, args.variant, out)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _write_manifest(config, "emit-sft", [trajectories_path], [out])
    print(f"emitted {stats.written} example(s) ({stats.variant}) -> {out}")
    return EXIT_OK


def cmd_emit_config(config: ProjectConfig, args: argparse.Namespace) -> int:
    try:
        training = TrainingConfig(epochs=args.epochs, seed=config.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    # Relative dataset paths are resolved against the config file's
    # directory by consumers, keeping the artifact location-independent.
    dataset = args.dataset if args.dataset else "sft_w2sr_p.jsonl"
    out = Path(args.out) if args.out else config.output_dir / "training_config.txt"
    config.output_dir.mkdir(parents=True, exist_ok=True)
    emit_training_config(training, out, dataset)
    _write_manifest(config, "emit-config", [], [out])
    print(f"training config -> {out}")
    return EXIT_OK


def cmd_eval(config: ProjectConfig, args: argparse.Namespace) -> int:
    student = config.require_student()
    corpus = _load_stage_corpus(config)
    profile = config.eval_sampling
    if args.n_samples:
        profile = SamplingProfile(
            temperature=profile.temperature,
            top_p=profile.top_p,
            max_tokens=profile.max_tokens,
            n_samples=args.n_samples,
            seed=profile.seed,
        )
    template = load_template(student.template_id(config.template_overrides))

    eval_dir = config.output_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    generations_path = eval_dir / "generations.jsonl"
    results = load_results(generations_path) if generations_path.exists() else None
    if results is None:
        results = distill_or_eval_generate(corpus, student, profile, template, eval_dir)

    by_id = {record.id: record for record in corpus.records}
    tallies = []
    for record_id in sorted({r.record_id for r in results}):
        problem = by_id[record_id]
        samples = [r for r in results if r.record_id == record_id]
        correct = 0
        for sample in samples:
            graded = grade_generation(
                sample, problem.gold_answer, problem.answer_kind, student.config.model, template.id
            )
            if graded.verdict and graded.verdict.is_correct:
                correct += 1
        tallies.append(SampleTally(problem_id=record_id, n=len(samples), c=correct))
    tallies_path = eval_dir / "tallies.jsonl"
    save_tallies(tallies, tallies_path)

    score = pass_at_k(tallies, 1)
    _write_manifest(config, "eval", [_corpus_artifact(config)], [generations_path, tallies_path])
    print(f"pass@1 = {100.0 * score:.2f} over {len(tallies)} problem(s) -> {tallies_path}")
    errors = error_count(results)
    if errors:
        print(f"warning: {errors} generation error(s)", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def distill_or_eval_generate(corpus, section: EndpointSection, profile, template, out_dir: Path):
    from .inference import generate_batch

    checkpoints = out_dir / "checkpoints"
    checkpoints.mkdir(exist_ok=True)
    return generate_batch(
        corpus,
        section.config,
        profile,
        template,
        api=section.api,
        checkpoint_path=checkpoints / "generate.jsonl",
        results_path=out_dir / "generations.jsonl",
    )


def cmd_metrics(config: ProjectConfig | None, args: argparse.Namespace) -> int:
    if args.metric == "rgr":
        try:
            value = rgr(RgrInputs(weak=args.weak, w2s=args.w2s, strong=args.strong))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        print("inapplicable" if value is None else f"{value:.2f}")
        return EXIT_OK
    if args.metric == "passk":
        try:
            tallies = load_tallies(Path(args.tallies))
            value = pass_at_k(tallies, args.k)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(str(exc)) from exc
        print(f"{value:.6f}")
        return EXIT_OK
    if args.metric == "lengths":
        try:
            results = load_results(Path(args.results))
            stats = length_stats(results)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(str(exc)) from exc
        print(f"mean_tokens={stats.mean_tokens:.2f} count={stats.count} source={stats.source}")
        return EXIT_OK
    raise UsageError(f"unknown metric {args.metric!r}")


def cmd_report(config: ProjectConfig | None, args: argparse.Namespace) -> int:
    rows_path = Path(args.rows)
    try:
        raw_rows = json.loads(rows_path.read_text(encoding="utf-8"))
        rows = [
            ReportRow(
                benchmark=r["benchmark"],
                method=r["method"],
                pass_at_1=float(r["pass_at_1"]),
                rgr=None if r.get("rgr") is None else float(r["rgr"]),
                mean_length=None if r.get("mean_length") is None else float(r["mean_length"]),
            )
            for r in raw_rows
        ]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad rows file {rows_path}: {exc}") from exc
    out_dir = Path(args.out_dir) if args.out_dir else (config.output_dir if config else Path("."))
    try:
        paths = build_report(rows, out_dir)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if config is not None:
        _write_manifest(config, "report", [rows_path], [paths.markdown, paths.csv])
    print(f"report -> {paths.markdown} and {paths.csv}")
    for warning in paths.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


def cmd_mock_serve(config: ProjectConfig | None, args: argparse.Namespace) -> int:
    script = load_script(Path(args.script))
    server = serve(script, port=args.port, log_path=Path(args.log) if args.log else None)
    print(f"mock endpoint listening at {server.base_url} (Ctrl-C to stop)")
    try:
        while True:
            import time

            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    parser = _Parser(prog="w2s", description=__doc__)
    parser.add_argument("--version", action="version", version=f"w2s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_config(p: argparse.ArgumentParser, required: bool = True) -> None:
        p.add_argument("--config", required=required, help="project YAML config")
        p.add_argument("--output-dir", help="override output directory")
        p.add_argument("--seed", type=int, help="override project seed")

    p = sub.add_parser("ingest", help="load the benchmark into the normalized corpus")
    add_config(p)
    p.add_argument("--corpus-path", help="override corpus source file")
    p.add_argument("--adapter", help="override corpus adapter")

    p = sub.add_parser("distill", help="generate and grade teacher trajectories")
    add_config(p)

    p = sub.add_parser("partition", help="split trajectories by answer correctness")
    add_config(p)
    p.add_argument("--trajectories", help="trajectory JSONL (default: output_dir/trajectories.jsonl)")

    p = sub.add_parser("emit-sft", help="write an SFT dataset for one variant")
    add_config(p)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--trajectories", help="trajectory JSONL")
    p.add_argument("--out", help="output dataset path")

    p = sub.add_parser("emit-config", help="write the student training config")
    add_config(p)
    p.add_argument("--epochs", type=int, default=5, help="epoch count (10 = extended preset)")
    p.add_argument("--dataset", help="dataset path recorded in the config")
    p.add_argument("--out", help="output config path")

    p = sub.add_parser("eval", help="sample the student, grade, and tally")
    add_config(p)
    p.add_argument("--n-samples", type=int, help="samples per problem")

    p = sub.add_parser("metrics", help="compute pass@k, gap recovery, or lengths")
    msub = p.add_subparsers(dest="metric", required=True, parser_class=_Parser)
    m = msub.add_parser("rgr", help="reasoning gap recovered from a Pass@1 triple")
    m.add_argument("--weak", type=float, required=True)
    m.add_argument("--w2s", type=float, required=True)
    m.add_argument("--strong", type=float, required=True)
    m = msub.add_parser("passk", help="pass@k over a tally file")
    m.add_argument("--tallies", required=True)
    m.add_argument("--k", type=int, required=True)
    m = msub.add_parser("lengths", help="mean completion length over a results file")
    m.add_argument("--results", required=True)

    p = sub.add_parser("report", help="render the results table (markdown + CSV)")
    p.add_argument("--rows", required=True, help="JSON list of report rows")
    p.add_argument("--out-dir", help="report output directory")
    p.add_argument("--config", help="project YAML config (for the run manifest)")
    p.add_argument("--output-dir", help="override output directory")
    p.add_argument("--seed", type=int, help="override project seed")

    p = sub.add_parser("mock-serve", help="run the deterministic mock endpoint")
    p.add_argument("--script", required=True, help="response script JSONL")
    p.add_argument("--port", type=int, default=8123)
    p.add_argument("--log", help="request log output path")

    return parser


_NEEDS_CONFIG = {"ingest", "distill", "partition", "emit-sft", "emit-config", "eval"}

_HANDLERS = {
    "ingest": cmd_ingest,
    "distill": cmd_distill,
    "partition": cmd_partition,
    "emit-sft": cmd_emit_sft,
    "emit-config": cmd_emit_config,
    "eval": cmd_eval,
    "metrics": cmd_metrics,
    "report": cmd_report,
    "mock-serve": cmd_mock_serve,
}


def _apply_overrides(config: ProjectConfig, args: argparse.Namespace) -> ProjectConfig:
    from dataclasses import replace

    if getattr(args, "output_dir", None):
        config = replace(config, output_dir=Path(args.output_dir))
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "corpus_path", None):
        path = Path(args.corpus_path)
        if not path.exists():
            raise UsageError(f"corpus path does not exist: {path}")
        config = replace(config, corpus_path=path)
    if getattr(args, "adapter", None):
        config = replace(config, corpus_adapter=args.adapter)
    return config


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("httpx").setLevel(logging.WARNING)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = None
        if args.command in _NEEDS_CONFIG or (
            args.command == "report" and getattr(args, "config", None)
        ):
            config = load_project_config(args.config)
            config = _apply_overrides(config, args)
        return _HANDLERS[args.command](config, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InferenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        return EXIT_FAILURE
    except Exception as exc:  # pragma: no cover - defensive catch-all
        logger.exception("unhandled failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

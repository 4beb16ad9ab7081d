"""Command-line entry point: ``groundkit <command> ...``.

Exit codes: 0 success, 1 data or runtime error, 2 usage error. Data goes to
stdout or ``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from itertools import islice
from typing import IO, Iterable, Iterator, Sequence

from .core import (
    DatasetError,
    FrameAnnotation,
    PhraseSpan,
    ValidationError,
    dumps_line,
    iter_dataset,
    load_dataset,
    validate,
)
from .llm import API_KEY_ENV, EndpointConfig, HttpChatClient, LLMError, mock_complete
from .metrics import BUILTIN_JACCARD, evaluate, parse_metrics, resolve_similarity, threshold_sweep
from .pipeline import (
    AggregationError,
    AssemblyError,
    PipelineConfig,
    aggregate_captions,
    annotate_clip,
    run_pipeline,
)
from .prep import DEFAULT_OBJECTNESS_THRESHOLD, StatsAccumulator, postprocess, sample_frames

logger = logging.getLogger("groundkit")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
DEFAULT_SWEEP = "0,0.1,0.2,0.3,0.4,0.5"


class UsageError(Exception):
    pass


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0,1], got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output file (default: stdout)")


def _add_llm(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("LLM")
    which = g.add_mutually_exclusive_group(required=True)
    which.add_argument("--mock", action="store_true", help="use the deterministic offline mock")
    which.add_argument("--llm-endpoint", help=f"chat-completions base URL (key from ${API_KEY_ENV})")
    g.add_argument("--llm-model", help="model name sent to the endpoint")
    g.add_argument("--llm-timeout", type=float, default=60.0)
    g.add_argument("--llm-retries", type=int, default=3, help="transport retries per request")
    g.add_argument("--max-retries", type=int, default=2, help="re-asks after a malformed reply")
    g.add_argument("--max-concurrency", type=_positive_int, default=4)
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--max-tokens", type=_positive_int, default=512)
    g.add_argument("--seed", type=int, help="seed for retry jitter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("aggregate", help="frames -> tagged video captions")
    p.add_argument("--frames", required=True)
    _add_llm(p)
    _add_out(p)
    p.add_argument("--rejects", help="write failed clips here (JSON lines)")

    p = sub.add_parser("associate", help="frames + captions -> records")
    p.add_argument("--frames", required=True)
    p.add_argument("--captions", required=True, help="output of the aggregate command")
    _add_llm(p)
    _add_out(p)
    p.add_argument("--rejects")

    p = sub.add_parser("pipeline", help="frames -> records and rejects")
    p.add_argument("--frames", required=True)
    _add_llm(p)
    _add_out(p)
    p.add_argument("--rejects")
    p.add_argument("--batch-clips", type=_positive_int, default=64,
                   help="clips held in memory at once")

    p = sub.add_parser("postprocess", help="raw predictions -> records")
    p.add_argument("--raw", required=True)
    p.add_argument("--meta", required=True, help="records supplying caption, phrases and sizes")
    p.add_argument("--objectness-thresh", type=_fraction, default=DEFAULT_OBJECTNESS_THRESHOLD)
    _add_out(p)

    p = sub.add_parser("eval", help="predictions + ground truth -> JSON report")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", default="cider,meteor,ap50,recall,f1",
                   help="comma list of cider,meteor,ap50,recall,f1,msiou")
    p.add_argument("--iou-thresh", type=_fraction, default=0.5)
    p.add_argument("--sim-thresh", type=_fraction, default=0.5)
    p.add_argument("--similarity", default=BUILTIN_JACCARD, help="builtin:jaccard or http:<endpoint>")
    p.add_argument("--phrase-aware-ap", action="store_true")
    _add_out(p)

    p = sub.add_parser("sweep", help="AP50/recall across objectness thresholds")
    p.add_argument("--raw", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", default=DEFAULT_SWEEP)
    p.add_argument("--iou-thresh", type=_fraction, default=0.5)
    p.add_argument("--sim-thresh", type=_fraction, default=0.5)
    p.add_argument("--similarity", default=BUILTIN_JACCARD)
    _add_out(p)

    p = sub.add_parser("stats", help="records -> dataset statistics JSON")
    p.add_argument("--records", required=True)
    _add_out(p)

    p = sub.add_parser("validate", help="list invariant violations")
    p.add_argument("--records", required=True)
    p.add_argument("--kind", choices=("records", "frames", "raw"), default="records")
    _add_out(p)

    p = sub.add_parser("sample", help="frame indices for T-segment sampling")
    p.add_argument("--num-frames", type=_positive_int, required=True)
    p.add_argument("-t", type=_positive_int, default=8)
    p.add_argument("--mode", choices=("train", "test"), default="test")
    p.add_argument("--seed", type=int)
    _add_out(p)
    return parser


@contextmanager
def _output(path: str | None) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8") as fh:
        yield fh


def _llm(args: argparse.Namespace):
    if args.mock:
        return mock_complete
    if not args.llm_model:
        raise UsageError("--llm-endpoint requires --llm-model")
    config = EndpointConfig(args.llm_endpoint, args.llm_model, timeout_s=args.llm_timeout,
                            max_retries=args.llm_retries)
    return HttpChatClient(config, seed=args.seed)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(max_retries=args.max_retries, max_concurrency=args.max_concurrency,
                          temperature=args.temperature, max_tokens=args.max_tokens)


def _clip_groups(frames: Iterable[FrameAnnotation]) -> Iterator[tuple[str, list[FrameAnnotation]]]:
    """Consecutive frames of one clip; a clip must not reappear later in the file."""
    seen: set[str] = set()
    current: list[FrameAnnotation] = []
    for frame in frames:
        if current and frame.clip_id != current[0].clip_id:
            yield current[0].clip_id, current
            current = []
        if not current:
            if frame.clip_id in seen:
                raise ValueError(f"frames of clip {frame.clip_id!r} are not contiguous")
            seen.add(frame.clip_id)
        current.append(frame)
    if current:
        yield current[0].clip_id, current


def _write_reject(stream: IO[str] | None, clip_id: str, reason: str) -> None:
    logger.warning("rejected %s: %s", clip_id, reason)
    if stream is not None:
        stream.write(json.dumps({"clip_id": clip_id, "reason": reason}, ensure_ascii=False) + "\n")


@contextmanager
def _maybe_open(path: str | None) -> Iterator[IO[str] | None]:
    if path is None:
        yield None
        return
    with open(path, "w", encoding="utf-8") as fh:
        yield fh


def cmd_pipeline(args: argparse.Namespace) -> int:
    llm = _llm(args)
    config = _pipeline_config(args)
    groups = _clip_groups(iter_dataset(args.frames, "frames"))
    written = rejected = 0
    with _output(args.out) as out, _maybe_open(args.rejects) as rej:
        while True:
            batch = dict(islice(groups, args.batch_clips))
            if not batch:
                break
            result = run_pipeline(batch, llm, config)
            for record in result.records:
                out.write(dumps_line(record) + "\n")
            for r in result.rejects:
                _write_reject(rej, r.clip_id, r.reason)
            written += len(result.records)
            rejected += len(result.rejects)
    logger.info("pipeline: %d record(s), %d reject(s)", written, rejected)
    return EXIT_OK


def _spans_json(spans: Sequence[PhraseSpan]) -> list[dict]:
    return [{"id": s.id, "text": s.text, "char_start": s.char_start, "char_end": s.char_end} for s in spans]


def cmd_aggregate(args: argparse.Namespace) -> int:
    llm = _llm(args)
    config = _pipeline_config(args)
    with _output(args.out) as out, _maybe_open(args.rejects) as rej:
        for clip_id, frames in _clip_groups(iter_dataset(args.frames, "frames")):
            try:
                caption, spans = aggregate_captions(frames, llm, config)
            except AggregationError as exc:
                _write_reject(rej, clip_id, str(exc))
                continue
            out.write(json.dumps({"clip_id": clip_id, "caption": caption, "phrases": _spans_json(spans)},
                                 ensure_ascii=False) + "\n")
    return EXIT_OK


def _load_captions(path: str) -> dict[str, tuple[str, list[PhraseSpan]]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                spans = [PhraseSpan(int(p["id"]), str(p["text"]), int(p["char_start"]), int(p["char_end"]))
                         for p in d["phrases"]]
                out[str(d["clip_id"])] = (str(d["caption"]), spans)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(lineno, "", f"bad caption line ({exc})") from None
    return out


def cmd_associate(args: argparse.Namespace) -> int:
    llm = _llm(args)
    config = _pipeline_config(args)
    captions = _load_captions(args.captions)
    with _output(args.out) as out, _maybe_open(args.rejects) as rej:
        for clip_id, frames in _clip_groups(iter_dataset(args.frames, "frames")):
            if clip_id not in captions:
                _write_reject(rej, clip_id, "no caption")
                continue
            try:
                record = annotate_clip(frames, llm, config, caption=captions[clip_id])
            except (AssemblyError, ValueError) as exc:
                _write_reject(rej, clip_id, str(exc))
                continue
            out.write(dumps_line(record) + "\n")
    return EXIT_OK


def cmd_postprocess(args: argparse.Namespace) -> int:
    meta = {m.clip_id: m for m in iter_dataset(args.meta, "records")}
    with _output(args.out) as out:
        for raw in iter_dataset(args.raw, "raw"):
            problems = validate(raw)
            if problems:
                raise ValidationError(problems)
            if raw.clip_id not in meta:
                raise ValueError(f"no metadata record for clip {raw.clip_id!r}")
            out.write(dumps_line(postprocess(raw, meta[raw.clip_id], args.objectness_thresh)) + "\n")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        metrics = parse_metrics(args.metrics)
        similarity = resolve_similarity(args.similarity)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    preds = load_dataset(args.pred, "records")
    gts = load_dataset(args.gt, "records")
    report = evaluate(preds, gts, metrics, args.iou_thresh, args.sim_thresh, similarity,
                      args.similarity, args.phrase_aware_ap)
    with _output(args.out) as out:
        out.write(report.dumps() + "\n")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        thresholds = [float(t) for t in args.thresholds.split(",") if t.strip()]
        similarity = resolve_similarity(args.similarity)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    raw = load_dataset(args.raw, "raw")
    gts = load_dataset(args.gt, "records")
    rows = threshold_sweep(raw, gts, thresholds, args.iou_thresh, args.sim_thresh, similarity)
    with _output(args.out) as out:
        for row in rows:
            out.write(json.dumps({"threshold": row.threshold, "ap50": row.ap50, "recall": row.recall,
                                  "boxes_emitted": row.boxes_emitted}) + "\n")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    acc = StatsAccumulator()
    for record in iter_dataset(args.records, "records"):
        acc.add(record)
    with _output(args.out) as out:
        out.write(json.dumps(acc.result().to_json(), indent=2) + "\n")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    total = bad = 0
    with _output(args.out) as out:
        for item in iter_dataset(args.records, args.kind):
            total += 1
            problems = validate(item)
            if problems:
                bad += 1
                for v in problems:
                    out.write(str(v) + "\n")
    print(f"{total - bad}/{total} valid", file=sys.stderr)
    return EXIT_OK if bad == 0 else EXIT_ERROR


def cmd_sample(args: argparse.Namespace) -> int:
    indices = sample_frames(args.num_frames, args.t, args.mode, args.seed)
    with _output(args.out) as out:
        out.write(json.dumps(indices) + "\n")
    return EXIT_OK


COMMANDS = {
    "aggregate": cmd_aggregate,
    "associate": cmd_associate,
    "pipeline": cmd_pipeline,
    "postprocess": cmd_postprocess,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
    "validate": cmd_validate,
    "sample": cmd_sample,
}


class _StderrHandler(logging.Handler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            sys.stderr.write(self.format(record) + "\n")
        except Exception:
            self.handleError(record)


def _configure_logging(verbose: bool) -> None:
    if not any(isinstance(h, _StderrHandler) for h in logger.handlers):
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"groundkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ValidationError, LLMError, ValueError, OSError) as exc:
        print(f"groundkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

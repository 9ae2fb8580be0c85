"""Command-line entry points ``prc`` and ``watermark``.

Exit status: 0 on success, 2 when a precondition or parameter check fails,
3 on I/O errors (unreadable, unwritable or malformed files).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from prc.bits import BitString, RngStream
from prc.channels import ChannelSpec, apply_channel
from prc.errors import ConfigError, ParameterError, PreconditionError
from prc.harness import ExperimentConfig, load_config, resolve_spec, run_experiment
from prc.registry import SCHEMES, key_envelope, load_key, make_scheme
from prc.watermark import GenerationRecord, detect, generate_unwatermarked, generate_watermarked, parse_model

EXIT_OK, EXIT_PRECONDITION, EXIT_IO = 0, 2, 3


class InputError(OSError):
    """A file exists but its contents cannot be parsed."""


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _json_arg(text: str | None) -> Any:
    """Inline JSON, or a path to a JSON file."""
    if text is None:
        return None
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid inline JSON: {exc.msg}") from exc
    return _read_json(text)


def _read_lines(path: str) -> list[dict]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = []
    for i, line in enumerate(lines, 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{i}: invalid JSON ({exc.msg})") from exc
    return out


def _write(path: str, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _bitstring(obj: Any, where: str) -> BitString:
    try:
        return BitString.from_json(obj)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{where}: expected {{\"length\", \"hex\"}} object") from exc


def _params(args) -> tuple[dict, dict | None]:
    """``--params`` holds scheme parameters, optionally wrapped as ``{"params", "amplify"}``."""
    obj = _json_arg(args.params) or {}
    if not isinstance(obj, dict):
        raise ConfigError("--params must be a JSON object")
    amplify = _json_arg(getattr(args, "amplify", None))
    if "params" in obj:
        amplify = amplify or obj.get("amplify")
        obj = obj["params"]
    return dict(obj), amplify


def _rng(args, *parts) -> np.random.Generator:
    return RngStream(args.seed, ()).child(*parts).generator()


# ---------------------------------------------------------------------------
# prc subcommands
# ---------------------------------------------------------------------------


def cmd_keygen(args) -> int:
    params, amplify = _params(args)
    cfg = ExperimentConfig(kind="decode", scheme=args.scheme, params=params, amplify=amplify, seed=args.seed)
    spec, extras = resolve_spec(cfg, 0)
    scheme = make_scheme(spec["scheme"], spec["params"], spec["amplify"])
    sk, pk = scheme.keygen(_rng(args, "keygen"))
    text = json.dumps(key_envelope(scheme, sk, pk)) + "\n"
    sys.stdout.write(text) if args.out == "-" else _write(args.out, text)
    for name, value in extras:
        print(f"{name}: {getattr(value, 'rate', value)}", file=sys.stderr)
    return EXIT_OK


def cmd_encode(args) -> int:
    scheme, _, pk = load_key(args.key)
    rng = _rng(args, "encode")
    lines = [json.dumps(scheme.encode(pk, rng).to_json()) for _ in range(args.trials)]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    channel = ChannelSpec.from_json(_json_arg(args.channel))
    rng = _rng(args, "corrupt")
    words = [_bitstring(obj, f"{args.input}:{i + 1}") for i, obj in enumerate(_read_lines(args.input))]
    lines = [json.dumps(apply_channel(channel, x, rng).to_json()) for x in words]
    _write(args.out, "\n".join(lines) + ("\n" if lines else ""))
    return EXIT_OK


def cmd_decode(args) -> int:
    scheme, sk, _ = load_key(args.key)
    words = [_bitstring(obj, f"{args.input}:{i + 1}") for i, obj in enumerate(_read_lines(args.input))]
    results = [scheme.decode(sk, x).name for x in words]
    buf = ["index,result"] + [f"{i},{r}" for i, r in enumerate(results)]
    _write(args.out, "\n".join(buf) + "\n")
    print(f"ONE {results.count('ONE')} / {len(results)}")
    return EXIT_OK


def _experiment(args, kind: str, **extra) -> ExperimentConfig:
    params, amplify = _params(args)
    channel = _json_arg(getattr(args, "channel", None))
    return ExperimentConfig(
        kind=kind, scheme=args.scheme, params=params, amplify=amplify, channel=channel,
        trials=args.trials, seed=args.seed, keys=getattr(args, "keys", 1), **extra,
    )


def cmd_calibrate(args) -> int:
    cfg = _experiment(args, "calibrate", options={"failure": args.failure})
    report = run_experiment(cfg, args.out, timing=args.timing, workers=args.workers)
    sys.stdout.write(report.to_csv())
    alpha, delta = report.row("alpha").estimate, report.row("delta").estimate
    if alpha <= delta:
        raise PreconditionError(f"alpha={alpha:.4f} does not exceed delta={delta:.4f}; the base scheme cannot be amplified")
    return EXIT_OK


def cmd_distinguish(args) -> int:
    if args.trials < 100:
        raise ParameterError("distinguishers need at least 100 samples (--trials)")
    cfg = _experiment(args, "distinguish", options={"cheat": args.cheat, "rank_keys": args.rank_keys})
    report = run_experiment(cfg, args.out, timing=args.timing, workers=args.workers)
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides: dict[str, Any] = {}
    if args.scheme:
        overrides["scheme"] = args.scheme
    if args.params:
        overrides["params"], amplify = _params(args)
        if amplify:
            overrides["amplify"] = amplify
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.kind:
        overrides["kind"] = args.kind
    cfg = replace(cfg, **overrides)
    report = run_experiment(cfg, args.out, timing=args.timing, workers=args.workers)
    print(f"{len(report.rows)} rows written to {args.out} (config {report.metadata['config_hash']})")
    return EXIT_OK


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prc", description="Pseudorandom code experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, scheme=True, trials=True, out_help="output path"):
        if scheme:
            p.add_argument("--scheme", choices=sorted(SCHEMES), required=True)
            p.add_argument("--params", help="JSON file (or inline JSON) with scheme parameters")
            p.add_argument("--amplify", help='amplifier block: {"t","alpha","delta"} or {"calibrate": trials, "channel": {...}}')
        p.add_argument("--seed", type=_seed, default=0)
        if trials:
            p.add_argument("--trials", type=_positive, default=1000)
        p.add_argument("--out", required=True, help=out_help)

    p = sub.add_parser("keygen", help="generate a key file")
    common(p, trials=False, out_help="key file ('-' for stdout)")
    p.set_defaults(fn=cmd_keygen)

    p = sub.add_parser("encode", help="write codewords (one JSON BitString per line)")
    p.add_argument("--key", required=True)
    common(p, scheme=False, out_help="codeword JSONL")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("corrupt", help="pass codewords through a channel")
    p.add_argument("--channel", required=True, help='ChannelSpec JSON, e.g. {"kind":"bsc","p":0.1}')
    p.add_argument("--in", dest="input", required=True)
    common(p, scheme=False, trials=False)
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("decode", help="decode strings, writing index,result CSV")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="input", required=True)
    common(p, scheme=False, trials=False)
    p.set_defaults(fn=cmd_decode)

    for name, fn, helptext in (("calibrate", cmd_calibrate, "estimate alpha and delta"), ("distinguish", cmd_distinguish, "run the distinguisher battery")):
        p = sub.add_parser(name, help=helptext)
        common(p, out_help="report CSV (metadata goes to <out>.json)")
        p.add_argument("--channel", help="ChannelSpec JSON (calibration channel)")
        p.add_argument("--keys", type=_positive, default=1)
        p.add_argument("--workers", type=_positive, default=1)
        p.add_argument("--timing", action="store_true", help="add a seconds column")
        p.set_defaults(fn=fn)
        if name == "calibrate":
            p.add_argument("--failure", type=float, default=0.01)
        else:
            p.add_argument("--cheat", action="store_true", help="include the secret-key decoder as a test")
            p.add_argument("--rank-keys", type=int, default=0)

    p = sub.add_parser("experiment", help="run an ExperimentConfig JSON")
    p.add_argument("--config")
    p.add_argument("--kind")
    p.add_argument("--scheme", choices=sorted(SCHEMES))
    p.add_argument("--params")
    p.add_argument("--amplify")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--trials", type=_positive)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--timing", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_experiment)
    return parser


def _run(fn: Callable[[], int]) -> int:
    try:
        return fn()
    except (PreconditionError, ParameterError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return _run(lambda: args.fn(args))


# ---------------------------------------------------------------------------
# watermark
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    scheme, _, pk = load_key(args.scheme)
    model = parse_model(args.model)
    rng = RngStream(args.seed, ()).child("watermark").generator()
    records = [generate_watermarked(model, args.prompt, scheme, pk, rng) for _ in range(args.count)]
    records += [generate_unwatermarked(model, args.prompt, scheme.codeword_length(), rng) for _ in range(args.plain)]
    records = [replace(r, model=args.model) for r in records]
    _write(args.out, "".join(r.dumps() + "\n" for r in records))
    return EXIT_OK


def cmd_detect(args) -> int:
    scheme, sk, _ = load_key(args.scheme)
    rows = []
    for i, obj in enumerate(_read_lines(args.input)):
        try:
            rec = GenerationRecord.from_json(obj)
        except (KeyError, TypeError) as exc:
            raise InputError(f"{args.input}:{i + 1}: malformed record") from exc
        rows.append((i, rec.prompt, rec.model, int(rec.watermarked), detect(scheme, sk, rec.z).name))
    try:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        with open(args.report, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "prompt", "model", "watermarked", "result"])
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {args.report}: {exc.strerror or exc}") from exc
    marked = [r for r in rows if r[3]]
    plain = [r for r in rows if not r[3]]
    if marked:
        print(f"watermarked: ONE {sum(r[4] == 'ONE' for r in marked)} / {len(marked)}")
    if plain:
        print(f"plain: BOT {sum(r[4] == 'BOT' for r in plain)} / {len(plain)}")
    return EXIT_OK


def build_watermark_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="watermark", description="Toy binary-model watermarking.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("generate", help="write generation records")
    p.add_argument("--model", required=True, help="constant:p=0.3, sinusoidal:amplitude=0.1, hash")
    p.add_argument("--prompt", default="")
    p.add_argument("--scheme", required=True, help="key file")
    p.add_argument("--count", type=int, default=1, help="watermarked records")
    p.add_argument("--plain", type=int, default=0, help="additional unwatermarked records")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)
    p = sub.add_parser("detect", help="decode every record and write a CSV report")
    p.add_argument("--scheme", required=True, help="key file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_detect)
    return parser


def watermark_main(argv: list[str] | None = None) -> int:
    args = build_watermark_parser().parse_args(argv)
    return _run(lambda: args.fn(args))


if __name__ == "__main__":
    sys.exit(main())

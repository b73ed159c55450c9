"""Command-line entry point: ``quadsampler run|audit|validate <spec>``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from ..errors import QuadSamplerError
from .run import EXIT_FAILED, EXIT_INVALID, prepare, run_experiment
from .spec import load_spec


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadsampler", description=__doc__)
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run an experiment spec"),
                       ("audit", "run the stand-admission audit described by a spec"),
                       ("validate", "parse and validate a spec without running it")):
        s = sub.add_parser(name, help=text)
        s.add_argument("spec", help="path to the YAML experiment spec")
        s.add_argument("--seed", type=int, action="append", help="override the spec's seeds (repeatable)")
        if name != "validate":
            s.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
            s.add_argument("--out", help="output directory (default: spec 'output' or runs/<spec name>)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    log = logging.getLogger("quadsampler")
    try:
        spec = load_spec(args.spec)
        if args.seed:
            if any(s < 0 for s in args.seed):
                raise QuadSamplerError("--seed must be nonnegative")
            spec = replace(spec, seeds=tuple(args.seed))
        if args.command == "validate":
            ctx = prepare(spec)
            print(f"{args.spec}: ok (mode {spec.mode}, models {', '.join(sorted(ctx.models))}, "
                  f"seeds {list(spec.seeds)})")
            return 0
        mode = "stand_audit" if args.command == "audit" else None
        return run_experiment(spec, args.out, args.workers, mode=mode)
    except (QuadSamplerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - reported, not hidden
        log.exception("unexpected failure: %s", exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: export a key list, or verify an exported file."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import ExporterError
from .export import ExportJob, export, verify


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskdiff-export",
        description="Encode embedding keys into bit-exact EMBV1 files.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="encode a key list into an EMBV1 file")
    p.add_argument("--keys", required=True, help="key list from the `keys` subcommand")
    p.add_argument("--out", required=True, help="output EMBV1 path")
    p.add_argument("--model", default="token-hash:384:0",
                   help="sentence-transformers checkpoint, or token-hash:<dim>:<seed>")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default=None, help="device hint (cpu, cuda, ...)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="validate an EMBV1 file against its key list")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--keys", required=True)
    p.set_defaults(func=cmd_verify)

    return parser


def cmd_run(args) -> int:
    job = ExportJob(keys_path=args.keys, out_path=args.out, model_id=args.model,
                    batch_size=args.batch_size, device=args.device)
    count = export(job)
    print(f"{count} vectors -> {args.out}")
    return 0


def cmd_verify(args) -> int:
    stats = verify(args.embeddings, args.keys)
    print(f"pass: {stats['count']} keys at dim {stats['dim']}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExporterError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

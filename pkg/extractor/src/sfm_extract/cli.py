"""CLI: `sfm-extract extract` to emit a bundle, `sfm-extract validate` to check one.

Exit codes: 0 success, 1 usage error, 2 manifest/format/validation error,
3 audio/backend/runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import BackendUnavailableError
from .bundle_format import BundleFormatError, check_bundle_dir
from .manifest import ManifestError, load_manifest
from .pipeline import ExtractError, extract


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="sfm-extract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="extract embeddings listed in a manifest")
    p.add_argument("--manifest", required=True, help="UTF-8 JSON manifest file")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--on-error", choices=["skip", "abort"], default="abort",
                   help="undecodable audio handling (default: abort)")
    p.add_argument("--device", default="cpu", help="inference device (default: cpu)")
    p.add_argument("--batch-size", type=int, default=1,
                   help="accepted for compatibility; files are processed one at a "
                        "time so outputs never depend on it")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("validate", help="re-check a bundle directory's byte format")
    p.add_argument("bundle", help="bundle directory")
    p.add_argument("--manifest", default=None,
                   help="optional manifest to cross-check the expected width")
    p.set_defaults(func=cmd_validate)
    return parser


def cmd_extract(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    report = extract(manifest, args.out, base_dir=manifest_path.parent,
                     on_error=args.on_error, device=args.device)
    print(json.dumps(report, indent=2))
    return 0


def cmd_validate(args) -> int:
    expected = None
    if args.manifest is not None:
        expected = load_manifest(Path(args.manifest)).expected_dim
    report = check_bundle_dir(args.bundle, expected_dim=expected)
    print(f"bundle ok: {report['count']} records, dim {report['dim']}")
    for name, count in report["per_class"].items():
        print(f"  {name}: {count}")
    for split, size in report["splits"].items():
        print(f"  split {split}: {size}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except (ManifestError, BundleFormatError) as e:
        print(f"sfm-extract: error: {e}", file=sys.stderr)
        return 2
    except (ExtractError, BackendUnavailableError) as e:
        print(f"sfm-extract: error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"sfm-extract: i/o error: {e}", file=sys.stderr)
        return 3


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

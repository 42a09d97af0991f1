"""Command line: `export-bridge export ...` and `export-bridge fixtures ...`."""
import argparse
import sys

from vitiq import write_model
from vitiq.errors import ContractError, FormatError

from .dump import PREFIX_K, build_source_model, dump_fixtures
from .errors import BridgeError
from .mapping import build_model, load_arch, load_state, write_mapping


def cmd_export(args) -> int:
    config = load_arch(args.arch)
    state = load_state(args.checkpoint)
    model, mapping = build_model(state, config)
    write_model(model, args.out)
    write_mapping(mapping, str(args.out) + ".mapping.json")
    sys.stdout.write(f"exported\t{args.out}\t{len(model.tensors)} tensors\n")
    return 0


def cmd_fixtures(args) -> int:
    config = load_arch(args.arch)
    state = load_state(args.checkpoint)
    model = build_source_model(state, config)
    count = dump_fixtures(model, args.images, args.out, k=args.prefix)
    sys.stdout.write(f"dumped\t{args.out}\t{count} records\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="export-bridge",
        description="convert torch ViT checkpoints to VWTF and dump activation fixtures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="checkpoint -> VWTF weight file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--arch", required=True,
                   help="arch descriptor: inline JSON or path to a JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("fixtures", help="dump per-image activation records")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--arch", required=True)
    p.add_argument("--images", required=True, help="directory of PPM images")
    p.add_argument("--out", required=True)
    p.add_argument("--prefix", type=int, default=PREFIX_K,
                   help="values kept per tensor prefix")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BridgeError, ContractError, FormatError, OSError, ValueError) as exc:
        sys.stderr.write(f"error\t{exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

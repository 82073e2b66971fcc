"""Command-line front end: boot, demos, bench, resource reports, wallet."""

from __future__ import annotations

import argparse
import sys
import tempfile
import uuid as uuid_mod

from .bench import (
    DEFAULT_NS_PER_BYTE,
    DEFAULT_NS_PER_OP,
    DEFAULT_REPETITIONS,
    run_bench,
)
from .client_api import Context, Direction, Operation, Value
from .config import SimConfig, load_config
from .enclave import TA_KIND_INCREMENT, TA_KIND_SHMEM16
from .fabric import Fabric
from .protocol import TAImage, encode_image
from .resource_model import get_profile, render_report
from .wallet import client as wallet_client

_DEMO_INC_UUID = uuid_mod.UUID("0de30000-0001-4000-8000-000000000001")
_DEMO_SHM_UUID = uuid_mod.UUID("0de30000-0002-4000-8000-000000000002")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--enclaves", type=int, metavar="N",
                        help="number of enclave slots")
    common.add_argument("--device", help="device profile name or file")
    common.add_argument("--seed", type=int, help="deterministic RNG seed")
    common.add_argument("--storage-dir", help="sealed-storage directory")
    common.add_argument("--uart-dir",
                        help="mirror enclave logs to this directory")

    parser = argparse.ArgumentParser(
        prog="teefab",
        description="Software model of an FPGA fabric that builds TEEs on demand.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("boot", parents=[common],
                   help="validate the config and bring the fabric up")

    demo = sub.add_parser("demo", parents=[common],
                          help="run a canned trusted application")
    demo.add_argument("name", choices=("increment", "shmem16"))
    demo.add_argument("--value", type=int, default=41,
                      help="input for the increment demo")

    bench = sub.add_parser("bench", parents=[common],
                           help="time the five fabric scenarios")
    bench.add_argument("--repetitions", type=int, default=DEFAULT_REPETITIONS)
    bench.add_argument("--ns-per-byte", type=int, default=DEFAULT_NS_PER_BYTE,
                       help="modelled DMA cost per byte moved")
    bench.add_argument("--ns-per-op", type=int, default=DEFAULT_NS_PER_OP,
                       help="modelled setup cost per transfer")

    resources = sub.add_parser("resources", parents=[common],
                               help="hardware cost of an enclave count")

    wallet = sub.add_parser("wallet", help="drive the Bitcoin wallet TA")
    wallet.add_argument("rest", nargs=argparse.REMAINDER,
                        help="arguments for the wallet command")
    return parser


def _build_config(args):
    config = load_config(args.config) if args.config else SimConfig()
    if args.enclaves is not None:
        config.enclave_count = args.enclaves
    if args.device is not None:
        config.device_profile = args.device
    if args.seed is not None:
        config.rng_seed = args.seed
    if args.storage_dir is not None:
        config.storage_dir = args.storage_dir
    if args.uart_dir is not None:
        config.uart_dir = args.uart_dir
    return config


def _cmd_boot(config):
    fabric = Fabric(config)
    try:
        device = config.device()
        print(f"fabric up: {config.enclave_count} enclave slot(s) "
              f"on {device.name}")
        print(f"{'slot':<6}{'base':<8}{'state':<10}{'ta':<38}")
        for row in fabric.slot_snapshot():
            print(f"{row['slot']:<6}{row['tcm_base']:<8}{row['state']:<10}"
                  f"{row['uuid'] or '-':<38}")
    finally:
        fabric.shutdown()
    return 0


def _cmd_demo(config, args):
    fabric = Fabric(config)
    try:
        with Context(fabric) as context:
            if args.name == "increment":
                image = encode_image(TAImage(_DEMO_INC_UUID,
                                             TA_KIND_INCREMENT))
                with context.open_session(_DEMO_INC_UUID, image) as session:
                    result = session.invoke_command(
                        0, Operation(Value(Direction.INOUT, args.value
                                           & 0xFFFFFFFF)))
                    result.raise_for_code("increment demo")
                    print(result.value(0)[0])
            else:
                image = encode_image(TAImage(_DEMO_SHM_UUID, TA_KIND_SHMEM16))
                with context.open_session(_DEMO_SHM_UUID, image) as session:
                    block = session.allocate_shared_memory(16, Direction.OUT)
                    session.invoke_command(
                        0, Operation(block)).raise_for_code("shmem16 demo")
                    print(block.read().hex())
    finally:
        fabric.shutdown()
    return 0


def _cmd_bench(config, args):
    report = run_bench(repetitions=args.repetitions,
                       per_byte_ns=args.ns_per_byte,
                       per_op_ns=args.ns_per_op,
                       seed=config.rng_seed or 0,
                       storage_dir=tempfile.mkdtemp(prefix="teefab-bench-"))
    print(report.render_text())
    return 0


def _cmd_resources(config):
    print(render_report(config.enclave_count,
                        get_profile(config.device_profile)))
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "wallet":
        rest = args.rest
        if rest and rest[0] == "--":
            rest = rest[1:]
        return wallet_client.main(rest)
    try:
        config = _build_config(args)
        if args.command == "boot":
            return _cmd_boot(config)
        if args.command == "demo":
            return _cmd_demo(config, args)
        if args.command == "bench":
            return _cmd_bench(config, args)
        return _cmd_resources(config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

import argparse
import logging
import sys

from ccqm import __version__
from ccqm.config import RunConfig
from ccqm.constants import EXIT_ERROR
from ccqm.errors import CCQMError
from ccqm.runner import ExperimentRunner

logger = logging.getLogger(__name__)

AUDIT_KINDS = ("cyclic", "stabilizer", "handlebody", "coset", "avoidance", "dependence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccqm",
        description="Counting quasi-homomorphisms on Farey graph and tree models",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )
    parser.add_argument("--enable-log", action="store_true")
    parser.add_argument("--model", choices=("farey", "tree"))
    parser.add_argument("--n-schedule", help='Truncation sizes, e.g. "8,16,32,64"')
    parser.add_argument("--gens", help="Generator file with lines 'R = 1 1 0 1'")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cache", help="Distance cache file")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", help="Write records here instead of stdout")

    commands = parser.add_subparsers(dest="command", required=True)
    dist = commands.add_parser("dist", help="Stable distance between two vertices")
    dist.add_argument("x")
    dist.add_argument("y")
    qm = commands.add_parser("qm", help="Evaluate h_omega on a word")
    qm.add_argument("word")
    qm.add_argument("config")
    defect = commands.add_parser("defect", help="Sample the defect")
    defect.add_argument("config")
    homogenize = commands.add_parser("homogenize", help="Homogenize h_omega")
    homogenize.add_argument("word")
    homogenize.add_argument("config")
    family = commands.add_parser("family", help="Certify an independent family")
    family.add_argument("config")
    audit = commands.add_parser("audit", help="Run one of the audits")
    audit.add_argument("kind", choices=AUDIT_KINDS)
    audit.add_argument("config")
    conecheck = commands.add_parser("conecheck", help="Cone off the disk set")
    conecheck.add_argument("config")
    return parser


def dispatch(runner: ExperimentRunner, args: argparse.Namespace) -> int:
    if config := getattr(args, "config", None):
        runner.load_experiment(config)
    match args.command:
        case "dist":
            return runner.dist(args.x, args.y)
        case "qm":
            return runner.qm(args.word)
        case "defect":
            return runner.defect()
        case "homogenize":
            return runner.homogenize(args.word)
        case "family":
            return runner.family()
        case "audit":
            return runner.audit(args.kind)
        case "conecheck":
            return runner.conecheck()
    raise CCQMError(f"Unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig()
        config.update(vars(args))
    except CCQMError as e:
        logger.error(e)
        print(f"ccqm: error: {e}", file=sys.stderr)
        return EXIT_ERROR

    if config.enable_log:
        package_logger = logging.getLogger("ccqm")
        package_logger.setLevel(logging.DEBUG)
        file_handler = logging.FileHandler("ccqm.log")
        file_handler.setLevel(logging.DEBUG)
        package_logger.addHandler(file_handler)

    try:
        with ExperimentRunner(config) as runner:
            return dispatch(runner, args)
    except (CCQMError, OSError) as e:
        logger.error(e)
        print(f"ccqm: error: {e}", file=sys.stderr)
        return EXIT_ERROR

"""
Command line interface for epsched.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import argparse
import contextlib
import logging
import sys
from typing import Dict, List, Optional, Sequence, Union

import epsched
from epsched.common import CycleError, Error, ManifestError, OptionError, ProfileError, as_list
from epsched.manifest import (
    SyntheticProfile,
    bundled_manifest_paths,
    generate_synthetic,
    load_manifest,
    write_manifest,
    write_manifest_summary_csv,
)
from epsched.netsim import DEFAULT_BANDWIDTH, DEFAULT_LOSS_RATE, DEFAULT_ONE_WAY_DELAY, LinkParams
from epsched.scheduler import DEFAULT_QUANTUM_SIZE, STRATEGY_NAMES, Quantum, StrategyKind
from epsched.summary import AGGREGATES
from epsched.sweep import (
    DEFAULT_ALPHAS,
    DEFAULT_BASELINE_KIND,
    DEFAULT_ITERATIONS,
    DEFAULT_STRATEGY_KINDS,
    ExperimentPlan,
    describe_manifest,
    run_sweep,
)
from epsched.weights import validated_alpha
from epsched.write import SummaryWriter

#: Actions available as first argument.
VALID_ACTIONS = ("sweep", "describe", "generate")

#: Valid formats for option --format of action "describe".
VALID_DESCRIBE_FORMATS = ("summary", "csv")

_DEFAULT_AGGREGATE = "mean"
_DEFAULT_DEPTH = 1
_DEFAULT_DESCRIBE_FORMAT = "summary"
_DEFAULT_JOBS = 1
_DEFAULT_OUTPUT = "STDOUT"
_DEFAULT_OUTPUT_FOLDER = "epsched-results"
_DEFAULT_RESOURCE_COUNT = 30
_DEFAULT_SEED = 0
_DEFAULT_SITE_NAME = "synthetic"
_DEFAULT_TOTAL_BYTES = 2_000_000
_DEFAULT_URGENCY_MIX = "0:0.1,2:0.2,3:0.3,5:0.2,7:0.2"

_HELP_ALPHA = """comma separated list of weight factors between 0 (equal shares
 like round robin) and 1 (shares by urgency only) to simulate the weighted
 strategy with; default: %(default)s"""

_HELP_EPILOG = """Without --manifest, "sweep" uses the manifests that come
 with epsched, which are inspired by the structure of popular web sites."""

_HELP_STRATEGY = """strategies to compare, one or more of: {}; the baseline
 is always added; default: %(default)s""".format(", ".join(STRATEGY_NAMES))

_HELP_URGENCY_MIX = """comma separated list of URGENCY:FRACTION pairs with
 the fraction of resources of each urgency; fractions must sum up to 1;
 default: "%(default)s\""""

_NON_WEIGHTED_STRATEGY_NAMES = tuple(
    strategy_kind.value for strategy_kind in StrategyKind if strategy_kind != StrategyKind.weighted_incremental
)

_log = logging.getLogger("epsched")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        # Report broken arguments as configuration error instead of exiting right away.
        raise OptionError(f"{self.prog}: {message}")


def _option_value(function, source, *arguments):
    try:
        return function(*arguments)
    except Error as error:
        raise OptionError(str(error), source) from error


def _number_from(text: Union[str, int, float], to_number, name: str, source=None):
    try:
        return to_number(text)
    except (TypeError, ValueError):
        raise OptionError(f"{name} must be a number but is {text!r}", source) from None


def urgency_mix_from(text: str, source=None) -> Dict[int, float]:
    """
    Map of urgency level to fraction from text like "0:0.1,3:0.5,7:0.4".
    """
    result = {}
    for item in as_list(text):
        level_text, separator, fraction_text = item.partition(":")
        if separator == "":
            raise OptionError(f"urgency mix item must have the form URGENCY:FRACTION but is {item!r}", source)
        level = _number_from(level_text.strip(), int, "urgency", source)
        if level in result:
            raise OptionError(f"urgency {level} must be specified only once", source)
        result[level] = _number_from(fraction_text.strip(), float, "fraction", source)
    return result


class Command:
    """
    Command interface for epsched, where options starting with defaults can
    gradually be set and finally :py:meth:`execute()`.
    """

    def __init__(self):
        self._action = "sweep"
        self._aggregate = _DEFAULT_AGGREGATE
        self._alphas = list(DEFAULT_ALPHAS)
        self._bandwidth = DEFAULT_BANDWIDTH
        self._baseline_kind = DEFAULT_BASELINE_KIND
        self._delay = DEFAULT_ONE_WAY_DELAY
        self._depth = _DEFAULT_DEPTH
        self._describe_format = _DEFAULT_DESCRIBE_FORMAT
        self._has_static_weights = False
        self._is_verbose = False
        self._iterations = DEFAULT_ITERATIONS
        self._jobs = _DEFAULT_JOBS
        self._loss_rate = DEFAULT_LOSS_RATE
        self._manifest_paths: List[str] = []
        self._output = _DEFAULT_OUTPUT
        self._output_folder = _DEFAULT_OUTPUT_FOLDER
        self._quantum = Quantum(DEFAULT_QUANTUM_SIZE)
        self._resource_count = _DEFAULT_RESOURCE_COUNT
        self._seed = _DEFAULT_SEED
        self._site_name = _DEFAULT_SITE_NAME
        self._strategy_kinds = list(DEFAULT_STRATEGY_KINDS)
        self._total_bytes = _DEFAULT_TOTAL_BYTES
        self._urgency_mix = urgency_mix_from(_DEFAULT_URGENCY_MIX)

    @property
    def action(self) -> str:
        return self._action

    def set_action(self, action: str, source=None):
        if action not in VALID_ACTIONS:
            raise OptionError(f"action is {action} but must be one of: {', '.join(VALID_ACTIONS)}", source)
        self._action = action

    @property
    def aggregate(self) -> str:
        return self._aggregate

    def set_aggregate(self, aggregate: str, source=None):
        if aggregate not in AGGREGATES:
            raise OptionError(f"aggregate is {aggregate} but must be one of: {', '.join(AGGREGATES)}", source)
        self._aggregate = aggregate

    @property
    def alphas(self) -> List[float]:
        return self._alphas

    def set_alphas(self, alphas_or_text: Union[str, Sequence[float]], source=None):
        alphas = as_list(alphas_or_text)
        self._alphas = [
            _option_value(validated_alpha, source, _number_from(alpha, float, "alpha", source)) for alpha in alphas
        ]

    @property
    def bandwidth(self) -> int:
        """bandwidth of the simulated link in bytes per second"""
        return self._bandwidth

    def set_bandwidth(self, bandwidth: Union[str, int], source=None):
        bandwidth = _number_from(bandwidth, int, "bandwidth", source)
        _option_value(LinkParams, source, bandwidth)
        self._bandwidth = bandwidth

    @property
    def baseline_kind(self) -> StrategyKind:
        return self._baseline_kind

    def set_baseline(self, baseline_name: str, source=None):
        if baseline_name not in _NON_WEIGHTED_STRATEGY_NAMES:
            raise OptionError(
                f"baseline is {baseline_name} but must be one of: {', '.join(_NON_WEIGHTED_STRATEGY_NAMES)}", source
            )
        self._baseline_kind = StrategyKind(baseline_name)

    @property
    def delay(self) -> float:
        """one way delay of the simulated link in milliseconds"""
        return self._delay

    def set_delay(self, delay: Union[str, float], source=None):
        delay = _number_from(delay, float, "delay", source)
        _option_value(LinkParams, source, DEFAULT_BANDWIDTH, delay)
        self._delay = delay

    @property
    def depth(self) -> int:
        return self._depth

    def set_depth(self, depth: int, source=None):
        if depth < 1:
            raise OptionError(f"depth is {depth} but must be at least 1", source)
        self._depth = depth

    @property
    def describe_format(self) -> str:
        return self._describe_format

    def set_describe_format(self, describe_format: str, source=None):
        if describe_format not in VALID_DESCRIBE_FORMATS:
            raise OptionError(
                f"format is {describe_format} but must be one of: {', '.join(VALID_DESCRIBE_FORMATS)}", source
            )
        self._describe_format = describe_format

    @property
    def has_static_weights(self) -> bool:
        return self._has_static_weights

    def set_has_static_weights(self, has_static_weights: bool, source=None):
        self._has_static_weights = bool(has_static_weights)

    @property
    def is_verbose(self) -> bool:
        return self._is_verbose

    def set_is_verbose(self, is_verbose: bool, source=None):
        self._is_verbose = bool(is_verbose)

    @property
    def iterations(self) -> int:
        return self._iterations

    def set_iterations(self, iterations: int, source=None):
        if iterations < 1:
            raise OptionError(f"iterations are {iterations} but must be at least 1", source)
        self._iterations = iterations

    @property
    def jobs(self) -> int:
        return self._jobs

    def set_jobs(self, jobs: int, source=None):
        if jobs < 1:
            raise OptionError(f"jobs are {jobs} but must be at least 1", source)
        self._jobs = jobs

    @property
    def loss_rate(self) -> float:
        return self._loss_rate

    def set_loss_rate(self, loss_rate: Union[str, float], source=None):
        loss_rate = _number_from(loss_rate, float, "loss rate", source)
        _option_value(LinkParams, source, DEFAULT_BANDWIDTH, DEFAULT_ONE_WAY_DELAY, loss_rate)
        self._loss_rate = loss_rate

    @property
    def manifest_paths(self) -> List[str]:
        """paths of the manifests to use, or an empty list for the bundled manifests"""
        return self._manifest_paths

    def set_manifest_paths(self, manifest_paths_or_text: Optional[Union[str, Sequence[str]]], source=None):
        self._manifest_paths = as_list(manifest_paths_or_text) if manifest_paths_or_text is not None else []

    @property
    def output(self) -> str:
        """file to write a generated manifest to, or "STDOUT" """
        return self._output

    def set_output(self, output: str, source=None):
        assert output is not None
        self._output = output

    @property
    def output_folder(self) -> str:
        return self._output_folder

    def set_output_folder(self, output_folder: str, source=None):
        assert output_folder is not None
        self._output_folder = output_folder

    @property
    def quantum(self) -> Quantum:
        return self._quantum

    def set_quantum(self, quantum_size: Union[str, int], source=None):
        self._quantum = _option_value(Quantum, source, _number_from(quantum_size, int, "quantum", source))

    @property
    def resource_count(self) -> int:
        return self._resource_count

    def set_resource_count(self, resource_count: int, source=None):
        if resource_count < 1:
            raise OptionError(f"resource count is {resource_count} but must be at least 1", source)
        self._resource_count = resource_count

    @property
    def seed(self) -> int:
        return self._seed

    def set_seed(self, seed: Union[str, int], source=None):
        seed = _number_from(seed, int, "seed", source)
        _option_value(LinkParams, source, DEFAULT_BANDWIDTH, DEFAULT_ONE_WAY_DELAY, DEFAULT_LOSS_RATE, seed)
        self._seed = seed

    @property
    def site_name(self) -> str:
        return self._site_name

    def set_site_name(self, site_name: str, source=None):
        if site_name.strip() == "":
            raise OptionError("site name must not be empty", source)
        self._site_name = site_name

    @property
    def strategy_kinds(self) -> List[StrategyKind]:
        return self._strategy_kinds

    def set_strategy_names(self, strategy_names_or_text: Union[str, Sequence[str]], source=None):
        strategy_names = [
            strategy_name
            for strategy_names_text in as_list(strategy_names_or_text)
            for strategy_name in as_list(strategy_names_text)
        ]
        if len(strategy_names) == 0:
            raise OptionError("at least one strategy must be specified", source)
        result = []
        for strategy_name in strategy_names:
            if strategy_name not in STRATEGY_NAMES:
                raise OptionError(
                    f"strategy is {strategy_name} but must be one of: {', '.join(STRATEGY_NAMES)}", source
                )
            result.append(StrategyKind(strategy_name))
        self._strategy_kinds = result

    @property
    def total_bytes(self) -> int:
        return self._total_bytes

    def set_total_bytes(self, total_bytes: int, source=None):
        if total_bytes < 1:
            raise OptionError(f"total bytes are {total_bytes} but must be at least 1", source)
        self._total_bytes = total_bytes

    @property
    def urgency_mix(self) -> Dict[int, float]:
        return self._urgency_mix

    def set_urgency_mix(self, urgency_mix_or_text: Union[str, Dict[int, float]], source=None):
        self._urgency_mix = (
            urgency_mix_from(urgency_mix_or_text, source)
            if isinstance(urgency_mix_or_text, str)
            else dict(urgency_mix_or_text)
        )

    def argument_parser(self) -> argparse.ArgumentParser:
        parser = _ArgumentParser(
            prog="epsched",
            description="compare HTTP/3 stream scheduling strategies on simulated page loads",
            epilog=_HELP_EPILOG,
        )
        parser.add_argument("--verbose", "-v", action="store_true", help="explain what is being done")
        parser.add_argument("--version", action="version", version="%(prog)s " + epsched.__version__)
        subparsers = parser.add_subparsers(dest="action", metavar="ACTION", required=True)

        sweep_parser = subparsers.add_parser(
            "sweep", help="simulate all strategies and alphas on several manifests", epilog=_HELP_EPILOG
        )
        sweep_parser.add_argument(
            "--manifest",
            "-m",
            metavar="PATH",
            nargs="+",
            action="extend",
            help="manifests of the pages to simulate; default: bundled manifests",
        )
        sweep_parser.add_argument(
            "--strategy",
            "-s",
            metavar="NAME",
            nargs="+",
            action="extend",
            help=_HELP_STRATEGY % {"default": ",".join(kind.value for kind in DEFAULT_STRATEGY_KINDS)},
        )
        sweep_parser.add_argument(
            "--alpha",
            "-a",
            metavar="LIST",
            default=",".join(f"{alpha:g}" for alpha in DEFAULT_ALPHAS),
            help=_HELP_ALPHA,
        )
        sweep_parser.add_argument(
            "--iterations",
            "-i",
            metavar="N",
            type=int,
            default=DEFAULT_ITERATIONS,
            help="number of runs with different seeds for each combination; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--seed",
            metavar="N",
            type=int,
            default=_DEFAULT_SEED,
            help="seed of the first iteration; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--bandwidth",
            "-b",
            metavar="BYTES_PER_SEC",
            type=int,
            default=DEFAULT_BANDWIDTH,
            help="bandwidth of the simulated link; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--delay",
            "-d",
            metavar="MS",
            type=float,
            default=DEFAULT_ONE_WAY_DELAY,
            help="delay in each direction in milliseconds; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--loss",
            "-l",
            metavar="RATE",
            type=float,
            default=DEFAULT_LOSS_RATE,
            help="probability of a packet getting lost; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--quantum",
            "-q",
            metavar="BYTES",
            type=int,
            default=DEFAULT_QUANTUM_SIZE,
            help="number of bytes the scheduler grants at once; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--baseline",
            metavar="NAME",
            choices=_NON_WEIGHTED_STRATEGY_NAMES,
            default=DEFAULT_BASELINE_KIND.value,
            help="strategy to compute improvements against; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--static-weights",
            action="store_true",
            help="compute shares once over all resources of a page instead of over the active streams",
        )
        sweep_parser.add_argument(
            "--aggregate",
            choices=AGGREGATES,
            default=_DEFAULT_AGGREGATE,
            help="how to combine improvements of several sites; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--out",
            "-o",
            metavar="FOLDER",
            default=_DEFAULT_OUTPUT_FOLDER,
            help="folder to write CSV files to; default: %(default)s",
        )
        sweep_parser.add_argument(
            "--jobs",
            "-j",
            metavar="N",
            type=int,
            default=_DEFAULT_JOBS,
            help="number of simulations to run in parallel; default: %(default)s",
        )

        describe_parser = subparsers.add_parser("describe", help="characterize the resources of manifests")
        describe_parser.add_argument(
            "--format",
            "-f",
            choices=VALID_DESCRIBE_FORMATS,
            default=_DEFAULT_DESCRIBE_FORMAT,
            help='output format; "csv" lists each resource of a single manifest; default: %(default)s',
        )
        describe_parser.add_argument("manifest_paths", metavar="PATH", nargs="+", help="manifests to describe")

        generate_parser = subparsers.add_parser("generate", help="write a synthetic manifest")
        generate_parser.add_argument(
            "--count",
            "-c",
            metavar="N",
            type=int,
            default=_DEFAULT_RESOURCE_COUNT,
            help="number of resources; default: %(default)s",
        )
        generate_parser.add_argument(
            "--total-bytes",
            "-t",
            metavar="BYTES",
            type=int,
            default=_DEFAULT_TOTAL_BYTES,
            help="sum of all resource sizes; default: %(default)s",
        )
        generate_parser.add_argument(
            "--mix", metavar="LIST", default=_DEFAULT_URGENCY_MIX, help=_HELP_URGENCY_MIX
        )
        generate_parser.add_argument(
            "--depth",
            metavar="N",
            type=int,
            default=_DEFAULT_DEPTH,
            help="number of discovery levels; default: %(default)s",
        )
        generate_parser.add_argument(
            "--seed", metavar="N", type=int, default=_DEFAULT_SEED, help="seed for randomization; default: %(default)s"
        )
        generate_parser.add_argument(
            "--site-name", metavar="NAME", default=_DEFAULT_SITE_NAME, help="name of the site; default: %(default)s"
        )
        generate_parser.add_argument(
            "--out",
            "-o",
            metavar="FILE",
            default=_DEFAULT_OUTPUT,
            help='file to write the manifest to; use "STDOUT" for standard output; default: "%(default)s"',
        )
        return parser

    def apply_arguments(self, arguments=None):
        if arguments is None:  # pragma: no cover
            arguments = sys.argv[1:]
        args = self.argument_parser().parse_args(arguments)
        self.set_action(args.action, "action")
        self.set_is_verbose(args.verbose, "option --verbose")
        if args.action == "sweep":
            self.set_manifest_paths(args.manifest, "option --manifest")
            if args.strategy is not None:
                self.set_strategy_names(args.strategy, "option --strategy")
            self.set_alphas(args.alpha, "option --alpha")
            self.set_iterations(args.iterations, "option --iterations")
            self.set_seed(args.seed, "option --seed")
            self.set_bandwidth(args.bandwidth, "option --bandwidth")
            self.set_delay(args.delay, "option --delay")
            self.set_loss_rate(args.loss, "option --loss")
            self.set_quantum(args.quantum, "option --quantum")
            self.set_baseline(args.baseline, "option --baseline")
            self.set_has_static_weights(args.static_weights, "option --static-weights")
            self.set_aggregate(args.aggregate, "option --aggregate")
            self.set_output_folder(args.out, "option --out")
            self.set_jobs(args.jobs, "option --jobs")
        elif args.action == "describe":
            self.set_describe_format(args.format, "option --format")
            self.set_manifest_paths(args.manifest_paths, "option PATH")
        else:
            assert args.action == "generate"
            self.set_resource_count(args.count, "option --count")
            self.set_total_bytes(args.total_bytes, "option --total-bytes")
            self.set_urgency_mix(args.mix, "option --mix")
            self.set_depth(args.depth, "option --depth")
            self.set_seed(args.seed, "option --seed")
            self.set_site_name(args.site_name, "option --site-name")
            self.set_output(args.out, "option --out")

    def experiment_plan(self) -> ExperimentPlan:
        manifest_paths = self.manifest_paths if len(self.manifest_paths) >= 1 else bundled_manifest_paths()
        return ExperimentPlan(
            manifest_paths=tuple(manifest_paths),
            strategy_kinds=tuple(self.strategy_kinds),
            alphas=tuple(self.alphas),
            iterations=self.iterations,
            base_seed=self.seed,
            link=LinkParams(self.bandwidth, self.delay, self.loss_rate, self.seed),
            quantum=self.quantum,
            baseline_kind=self.baseline_kind,
            has_static_weights=self.has_static_weights,
            aggregate=self.aggregate,
            output_folder=self.output_folder,
            jobs=self.jobs,
        )

    def synthetic_profile(self) -> SyntheticProfile:
        return SyntheticProfile(
            resource_count=self.resource_count,
            total_bytes=self.total_bytes,
            urgency_mix=self.urgency_mix,
            depth=self.depth,
            site_name=self.site_name,
        )

    def _execute_sweep(self):
        sweep_result = run_sweep(self.experiment_plan(), has_progress=True)
        with SummaryWriter(sys.stdout, sweep_result.sweep_summary, sweep_result.aggregated_cells):
            pass

    def _execute_describe(self):
        if self.describe_format == "csv":
            if len(self.manifest_paths) != 1:
                raise OptionError(
                    f"format csv requires exactly one manifest but got {len(self.manifest_paths)}", "option --format"
                )
            write_manifest_summary_csv(load_manifest(self.manifest_paths[0]), sys.stdout)
        else:
            for manifest_path in self.manifest_paths:
                describe_manifest(manifest_path, sys.stdout)

    def _execute_generate(self):
        manifest = generate_synthetic(self.synthetic_profile(), self.seed)
        if self.output == "STDOUT":
            target_context_manager = contextlib.nullcontext(sys.stdout)
        else:
            try:
                target_context_manager = open(self.output, "w", encoding="utf-8", newline="\n")  # noqa: SIM115
            except OSError as error:
                raise OptionError(f"cannot write manifest: {error}", "option --out") from error
        with target_context_manager as target_file:
            write_manifest(manifest, target_file)
        _log.info("wrote synthetic manifest with %d resources to %s", len(manifest.resources), self.output)

    def execute(self):
        _log.setLevel(logging.INFO if self.is_verbose else logging.WARNING)
        if self.action == "sweep":
            self._execute_sweep()
        elif self.action == "describe":
            self._execute_describe()
        else:
            assert self.action == "generate"
            self._execute_generate()


def epsched_command(arguments=None) -> int:
    """
    Run epsched with ``arguments`` and return the exit code: 0 on success,
    1 for configuration errors and 2 for anything else that went wrong.
    """
    result = 2
    command = Command()
    try:
        command.apply_arguments(arguments)
        command.execute()
        result = 0
    except KeyboardInterrupt:  # pragma: no cover
        _log.error("interrupted as requested by user")
    except (OptionError, ManifestError, CycleError, ProfileError) as error:
        _log.error(error)
        result = 1
    except Exception as error:
        _log.exception(error)

    return result


def main():  # pragma: no cover
    logging.basicConfig(level=logging.WARNING)
    sys.exit(epsched_command())


if __name__ == "__main__":  # pragma: no cover
    main()

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from larsen import CONFIG
from larsen.console_utils import error, info, table, warning
from larsen.core.loop import AcousticLoop
from larsen.core.stft import StftConfig, stft
from larsen.errors import ConfigurationError, DataError, LarsenError, UsageError
from larsen.experiment import KALMAN_REFERENCES, ExperimentSpec
from larsen.fdkf import KalmanConfig
from larsen.howling import detect_howling
from larsen.io.audio import SUBTYPES, read_wav, write_wav
from larsen.io.tensors import write_tensor
from larsen.metrics import evaluate_pair
from larsen.nonlinearity import KINDS, NonlinearityModel
from larsen.simulations import GAIN_PRESETS, GainSchedule, example_speech, scalar_scenario
from larsen.suppressors import (
    Cascade,
    ExternalSuppressor,
    GainLimiter,
    KalmanSuppressor,
    NotchBank,
    Passthrough,
    extract_features,
)
from larsen.utils import dump_json

SUPPRESSORS = ("none", "passthrough", "gain_limiter", "notch", "kalman", "external", "cascade")


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser exiting with the usage error code (1)"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def load_spec(args) -> ExperimentSpec:
    """Experiment specification of the --config file (or defaults), overridden by flags"""
    spec = ExperimentSpec.load(args.config) if args.config else ExperimentSpec()
    overrides = {
        "seed": args.seed,
        "output": args.output,
        "corpus": getattr(args, "corpus", None),
        "synthetic": getattr(args, "synthetic", None),
        "profile": getattr(args, "profile", None),
        "duration": getattr(args, "duration", None),
        "kalman_reference": getattr(args, "kalman_reference", None),
        "noise": getattr(args, "noise", None),
    }
    if getattr(args, "counts", None) is not None:
        overrides["counts"] = dict(zip(("train", "val", "test"), args.counts))
    return replace(spec, **{k: v for k, v in overrides.items() if v is not None})


def make_suppressor(name: str, params: dict = None, command=None, address=None, deadline=None):
    """Suppressor selected on the command line, `params` being its keyword arguments"""
    params = dict(params or {})
    external = {"command": command, "address": address}
    if deadline is not None:
        external["deadline"] = deadline
    if name in ("none", "passthrough"):
        return Passthrough(**params)
    elif name == "gain_limiter":
        return GainLimiter(**params)
    elif name == "notch":
        return NotchBank(**params)
    elif name == "kalman":
        if isinstance(params.get("config"), dict):
            params["config"] = KalmanConfig.from_dict(params["config"])
        return KalmanSuppressor(**params)
    elif name in ("external", "cascade"):
        if command is None and address is None:
            raise UsageError(f"--suppressor {name} requires --cmd or --address")
        if name == "external":
            return ExternalSuppressor(**external, **params)
        return Cascade(KalmanSuppressor(), ExternalSuppressor(**external, n_input_channels=2, **params))
    raise UsageError(f"unknown suppressor '{name}' (available: {', '.join(SUPPRESSORS)})")


def _parse_params(text):
    if text is None:
        return {}
    try:
        params = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"--params must be a JSON object ({e})")
    if not isinstance(params, dict):
        raise UsageError("--params must be a JSON object")
    return params


def _prepare_folder(folder: Path, force: bool, marker: str):
    if (folder / marker).exists() and not force:
        raise UsageError(f"{folder} already holds results, use --force to overwrite")
    folder.mkdir(parents=True, exist_ok=True)


def _stream_scenario(args, spec):
    from larsen.dataset import draw_scenario, load_scenario, open_corpus, plan_scenarios
    from larsen.io.corpus import SyntheticCorpus

    if args.scenario is not None:
        return load_scenario(args.scenario)

    if args.scalar is not None:
        target = example_speech(spec.duration, spec.sample_rate, seed=spec.seed)
        cfg = scalar_scenario(
            target,
            loop_gain=args.scalar,
            system_delay=args.system_delay if args.system_delay is not None else 0.3,
            stft=spec.stft,
        )
        meta = {"id": "scalar", "seed": [spec.seed], "gain": args.scalar}
        return cfg, meta

    if spec.corpus is None and spec.synthetic == 0:
        # one utterance per split
        corpus = SyntheticCorpus(3, spec.duration, spec.sample_rate, seed=spec.seed)
    else:
        corpus = open_corpus(spec)
    if spec.total == 0:
        raise ConfigurationError("the specification has no scenario (all counts are zero)")
    tasks = plan_scenarios(spec, corpus)
    if not 0 <= args.index < len(tasks):
        raise UsageError(f"--index must be within [0, {len(tasks) - 1}]")
    return draw_scenario(spec, corpus, tasks[args.index])


def _apply_overrides(cfg, args):
    changes = {}
    if args.gain is not None:
        changes["gain"] = args.gain
    if args.system_delay is not None and args.scalar is None:
        changes["system_delay"] = args.system_delay
    if args.nonlinearity is not None:
        changes["nonlinearity"] = NonlinearityModel(args.nonlinearity)
    if args.preset is not None and args.gain_schedule is not None:
        raise UsageError("use either --preset or --gain-schedule")
    if args.preset is not None:
        changes["gain_schedule"] = GainSchedule.preset(args.preset)
    elif args.gain_schedule is not None:
        changes["gain_schedule"] = GainSchedule.load(args.gain_schedule)
    return replace(cfg, **changes) if changes else cfg


def main(argv=None):
    parser = ArgumentParser(
        prog="larsen", description="Acoustic howling suppression laboratory"
    )
    subparsers = parser.add_subparsers(required=True, dest="command")

    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="experiment specification (YAML or JSON)", default=None)
    common.add_argument("--seed", type=int, help="root seed", default=None)
    common.add_argument(
        "--jobs", type=int, help="number of worker processes", default=CONFIG.get("jobs", 1)
    )
    common.add_argument("--output", type=str, help="output folder", default=None)
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--quiet", action="store_true", help="hide progress bars")

    def add_profile(p):
        p.add_argument(
            "--profile",
            type=str,
            choices=["default", "deployable"],
            help="STFT profile (512/256 or 128/64 samples)",
            default=None,
        )

    # gen-rir
    # -------
    def _gen_rir(args):
        from larsen.dataset import generate_rirs

        spec = load_spec(args)
        output = Path(args.output or "rirs")
        manifest = generate_rirs(spec, args.count, output, args.jobs, args.force, not args.quiet)
        info(f"{len(manifest.scenarios)} impulse response sets written in {output}")

    gen_rir = subparsers.add_parser(
        name="gen-rir", parents=[common], help="generate random room impulse response sets"
    )
    gen_rir.add_argument("-n", "--count", type=int, help="number of sets", default=10)
    gen_rir.set_defaults(func=_gen_rir)

    # gen-dataset
    # -----------
    def _gen_dataset(args):
        from larsen.dataset import generate_dataset

        spec = load_spec(args)
        manifest = generate_dataset(spec, spec.output, args.jobs, args.force, not args.quiet)
        counts = {split: len(manifest.split(split)) for split in ("train", "val", "test")}
        info(f"dataset written in {spec.output} {counts}")

    gen_dataset = subparsers.add_parser(
        name="gen-dataset", parents=[common], help="generate train/val/test scenarios"
    )
    gen_dataset.add_argument("--corpus", type=str, help="folder of mono utterances", default=None)
    gen_dataset.add_argument(
        "--synthetic", type=int, help="number of synthetic utterances (no corpus)", default=None
    )
    gen_dataset.add_argument(
        "--counts", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"), help="scenarios per split", default=None
    )
    gen_dataset.add_argument("--duration", type=float, help="scenario duration in seconds", default=None)
    gen_dataset.add_argument(
        "--kalman-reference", type=str, choices=KALMAN_REFERENCES, help="Kalman preprocessing reference", default=None
    )
    gen_dataset.add_argument("--noise", type=str, help="white, pink or a folder of noises", default=None)
    add_profile(gen_dataset)
    gen_dataset.set_defaults(func=_gen_dataset)

    # stream
    # ------
    def _stream(args):
        spec = load_spec(args)
        cfg, meta = _stream_scenario(args, spec)
        cfg = _apply_overrides(cfg, args)
        suppressor = make_suppressor(
            args.suppressor, _parse_params(args.params), args.cmd, args.address, args.deadline
        )
        output = Path(args.output or "stream")
        _prepare_folder(output, args.force, "metrics.json")

        loop = AcousticLoop(suppressor, name=args.suppressor)
        result = loop.run(cfg, show_progress=not args.quiet)
        print(loop)

        signals = {
            "y": result.mic,
            "s_hat": result.enhanced,
            "x": result.loudspeaker,
            "d": result.playback,
            "s": cfg.s,
        }
        for name, signal in signals.items():
            write_wav(output / f"{name}.wav", signal, args.subtype)
        result.per_frame.to_csv(output / "frames.csv", index=False)
        for name in ("y", "s_hat"):
            write_tensor(output / f"{name}_magnitude.ahsf", stft(signals[name], cfg.stft).magnitude)

        report = evaluate_pair(result.enhanced, cfg.s, cfg.stft, mic=result.mic)
        metrics = {
            "suppressor": args.suppressor,
            "gain": cfg.schedule.max_gain,
            "gain_schedule": cfg.schedule.to_list(),
            "delay_hops": cfg.delay_hops,
            "latency": result.latency,
            "saturated": result.saturated,
            "howling": result.howling.to_dict(),
            "enhanced": report.to_dict(),
        }
        dump_json(metrics, output / "metrics.json")
        dump_json(
            {
                "id": meta.get("id", "stream"),
                "source": meta,
                "gain": cfg.schedule.max_gain,
                "stft": cfg.stft.to_dict(),
                "reference": "s.wav",
                "mixture": "y.wav",
                "estimates": {args.suppressor: "s_hat.wav"},
            },
            output / "meta.json",
        )

        howling = result.howling
        if howling.detected:
            warning(
                f"howling detected at {howling.onset_time:.2f} s ({howling.criterion}, "
                f"{howling.peak_frequency_hz:.0f} Hz)"
            )
        else:
            info("no howling detected")
        info(f"SI-SDR {report.si_sdr_db:.2f} dB, results written in {output}")

    stream_parser = subparsers.add_parser(
        name="stream", parents=[common], help="run a scenario through the closed loop"
    )
    source = stream_parser.add_mutually_exclusive_group()
    source.add_argument("--scenario", type=str, help="scenario folder of a generated dataset", default=None)
    source.add_argument(
        "--scalar", type=float, help="toy scenario with a pure-gain feedback path of this loop gain", default=None
    )
    stream_parser.add_argument(
        "--index", type=int, help="scenario drawn from the specification", default=0
    )
    stream_parser.add_argument(
        "--suppressor", type=str, choices=SUPPRESSORS, help="suppressor in the loop", default="kalman"
    )
    stream_parser.add_argument("--params", type=str, help="suppressor keyword arguments (JSON)", default=None)
    stream_parser.add_argument("--cmd", type=str, help="command of an external suppressor", default=None)
    stream_parser.add_argument("--address", type=str, help="host:port of an external suppressor", default=None)
    stream_parser.add_argument("--deadline", type=float, help="external frame deadline in seconds", default=None)
    stream_parser.add_argument("--gain", type=float, help="amplification gain G", default=None)
    stream_parser.add_argument("--preset", type=str, choices=list(GAIN_PRESETS), help="gain schedule preset", default=None)
    stream_parser.add_argument("--gain-schedule", type=str, help="JSON list of [time_s, G] breakpoints", default=None)
    stream_parser.add_argument("--system-delay", type=float, help="system delay in seconds", default=None)
    stream_parser.add_argument("--nonlinearity", type=str, choices=KINDS, help="amplifier nonlinearity", default=None)
    stream_parser.add_argument("--corpus", type=str, help="folder of mono utterances", default=None)
    stream_parser.add_argument("--duration", type=float, help="duration in seconds", default=None)
    stream_parser.add_argument(
        "--subtype", type=str, choices=list(SUBTYPES), help="WAV sample format", default="float"
    )
    add_profile(stream_parser)
    stream_parser.set_defaults(func=_stream)

    # evaluate
    # --------
    def _evaluate(args):
        from larsen.evaluation import evaluate_directory

        estimates = {}
        for item in args.estimate or []:
            if "=" not in item:
                raise UsageError(f"--estimate expects NAME=FILE, got '{item}'")
            name, filename = item.split("=", 1)
            estimates[name] = filename
        result = evaluate_directory(args.folder, estimates, args.jobs, not args.quiet)
        output = Path(args.output or args.folder)
        if len(result.rows):
            result.save(output)
            info(f"evaluation written in {output}")
        print(result)

    evaluate = subparsers.add_parser(
        name="evaluate", parents=[common], help="evaluate estimates against references"
    )
    evaluate.add_argument("folder", type=str, help="dataset or stream output folder")
    evaluate.add_argument(
        "-e", "--estimate", type=str, action="append", help="extra estimate as NAME=FILE", default=None
    )
    evaluate.set_defaults(func=_evaluate)

    # export-features
    # ---------------
    def _export_features(args):
        from larsen.evaluation import find_scenarios

        folder = Path(args.folder)
        scenarios = find_scenarios(folder)
        if len(scenarios) == 0:
            raise DataError(f"no scenario found in {folder}")
        output = Path(args.output) if args.output else None
        for scenario in scenarios:
            destination = scenario if output is None else output / scenario.relative_to(folder)
            export_features(scenario, destination, args.ctx, args.mode, args.force)
        info(f"features of {len(scenarios)} scenarios exported")

    export = subparsers.add_parser(
        name="export-features", parents=[common], help="export network features and labels"
    )
    export.add_argument("folder", type=str, help="dataset or scenario folder")
    export.add_argument("--ctx", type=int, help="context frames on each side", default=2)
    export.add_argument("--mode", type=str, choices=["full", "lps"], help="feature set", default="full")
    export.set_defaults(func=_export_features)

    # detect-howl
    # -----------
    def _detect_howl(args):
        signal = read_wav(args.file)
        config = StftConfig.from_profile(args.profile or CONFIG.get("profile", "default"))
        report = detect_howling(signal, config)
        rows = [[k, v] for k, v in report.to_dict().items()]
        print(table(rows, ["howling", Path(args.file).name]))
        if args.output:
            dump_json(report.to_dict(), args.output)

    detect = subparsers.add_parser(
        name="detect-howl", parents=[common], help="detect howling in a WAV file"
    )
    detect.add_argument("file", type=str, help="mono WAV file")
    add_profile(detect)
    detect.set_defaults(func=_detect_howl)

    args = parser.parse_args(argv)
    try:
        args.func(args)
    except LarsenError as e:
        error(str(e))
        return e.exit_code
    return 0


def export_features(scenario, output=None, ctx=2, mode="full", force=True):
    """Write the features of a scenario folder and its clean spectrogram labels

    Writes ``features.ahsf`` (frames, features), ``labels.ahsf`` (2, frames, bins) holding the
    real and imaginary parts of the clean target spectrogram and ``features.json`` describing
    the layout.
    """
    scenario = Path(scenario)
    output = Path(output or scenario)
    with open(scenario / "meta.json", "r") as f:
        meta = json.load(f)
    if not (scenario / "e.wav").is_file():
        raise DataError(
            f"{scenario} has no Kalman output (e.wav), rerun gen-dataset to preprocess it"
        )
    _prepare_folder(output, force, "features.ahsf")
    config = StftConfig.from_dict(meta["stft"])
    y = read_wav(scenario / "y.wav")
    e = read_wav(scenario / "e.wav", y.sample_rate)
    s = read_wav(scenario / "s.wav", y.sample_rate)
    features = extract_features(stft(y, config), stft(e, config), ctx=ctx, mode=mode)
    S = stft(s, config).data
    tensor = features.to_tensor()
    write_tensor(output / "features.ahsf", tensor)
    write_tensor(output / "labels.ahsf", np.stack([S.real, S.imag]))
    dump_json(
        {
            "id": meta.get("id"),
            "mode": mode,
            "ctx": ctx,
            "frames": features.frames,
            "bins": config.bins,
            "features": tensor.shape[1],
            "kalman_reference": meta.get("kalman_reference"),
            "stft": config.to_dict(),
        },
        output / "features.json",
    )
    return tensor


if __name__ == "__main__":
    sys.exit(main())

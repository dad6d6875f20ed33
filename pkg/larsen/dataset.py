import json
import shutil
from functools import partial
from pathlib import Path
from typing import Union

import multiprocess as mp
import numpy as np

from larsen.console_utils import info, progress
from larsen.core.signal import TimeSignal, convolve
from larsen.core.stft import StftConfig
from larsen.errors import DataError, UsageError
from larsen.experiment import SPLITS, ExperimentSpec
from larsen.fdkf import KalmanConfig, process_stream
from larsen.io.audio import read_wav, write_wav
from larsen.io.corpus import Corpus, SyntheticCorpus, split_utterances
from larsen.io.manifest import MANIFEST_NAME, RunManifest, hash_files
from larsen.nonlinearity import NonlinearityModel
from larsen.room import rir_set_from_geometry, sample_rir_set
from larsen.simulations import (
    ScenarioConfig,
    example_noise,
    make_teacher_forced_mixture,
    set_active_level,
    teacher_forced_playback,
)
from larsen.suppressors.kalman import KalmanSuppressor
from larsen.utils import dump_json

# spawn key of the utterance split, out of the range of scenario indices
UTTERANCE_SPLIT_KEY = 2**31
RIR_NAMES = ("h_loudspeaker", "h_nearend", "h_noise")


def parallel_map(func, items, jobs=1, show_progress=False, **kwargs):
    """Ordered ``map`` of `func` over `items` on a bounded pool of `jobs` worker processes"""
    items = list(items)
    bar = progress(show_progress, total=len(items), **kwargs)
    if jobs <= 1 or len(items) <= 1:
        return [r for r in bar(map(func, items))]
    with mp.Pool(min(jobs, len(items))) as pool:
        return [r for r in bar(pool.imap(func, items))]


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    """Generator of scenario `index`, independent of every other scenario"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def open_corpus(spec: ExperimentSpec):
    if spec.corpus is not None:
        return Corpus(spec.corpus, spec.sample_rate)
    if spec.synthetic > 0:
        return SyntheticCorpus(spec.synthetic, spec.duration, spec.sample_rate, seed=spec.seed)
    raise DataError("no corpus: set a corpus folder or a number of synthetic utterances")


def _prepare_output(output: Path, force: bool, marker: str):
    if (output / marker).exists():
        if not force:
            raise UsageError(f"{output} already holds a generated set, use --force to overwrite")
        for name in list(SPLITS) + ["rirs"]:
            if (output / name).is_dir():
                shutil.rmtree(output / name)
    output.mkdir(parents=True, exist_ok=True)


def plan_scenarios(spec: ExperimentSpec, corpus) -> list:
    """Scenario tasks: id, split, index (seed) and utterance, splits using disjoint utterances"""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(UTTERANCE_SPLIT_KEY,)))
    pools = split_utterances(corpus.ids, spec.counts, rng)
    tasks = []
    index = 0
    for split in SPLITS:
        for i in range(spec.counts[split]):
            pick = int(rng.integers(len(pools[split])))
            tasks.append(
                {
                    "index": index,
                    "id": f"{split}/{i:05d}",
                    "split": split,
                    "utterance": pools[split][pick],
                }
            )
            index += 1
    return tasks


def _crop(signal: TimeSignal, n: int, rng: np.random.Generator) -> TimeSignal:
    if len(signal) <= n:
        return signal.fit(n)
    offset = int(rng.integers(len(signal) - n + 1))
    cropped = signal[offset : offset + n]
    return cropped if cropped.energy > 0 else signal[:n]


def _noise(spec: ExperimentSpec, n: int, rng: np.random.Generator) -> TimeSignal:
    if spec.noise in ("white", "pink"):
        return example_noise(n / spec.sample_rate, spec.sample_rate, color=spec.noise, seed=int(rng.integers(2**32)))
    noises = Corpus(spec.noise, spec.sample_rate)
    choice = noises.ids[int(rng.integers(len(noises)))]
    return noises.load(choice).tile(n)


def draw_scenario(spec: ExperimentSpec, corpus, task: dict):
    """Draw the scenario of `task`, returns its (config, metadata)"""
    rng = scenario_rng(spec.seed, task["index"])
    sample_rate = spec.sample_rate
    n = int(round(spec.duration * sample_rate))
    ranges = spec.ranges

    rirs = sample_rir_set(rng, ranges.rir_sampling(spec.rir_length), sample_rate)
    dry = _crop(corpus.load(task["utterance"]), n, rng)
    target = convolve(dry, rirs.h_nearend)[:n]
    level_db = float(rng.uniform(*ranges.level_db))
    target = set_active_level(target, level_db)
    noise = convolve(_noise(spec, n, rng), rirs.h_noise)[:n]

    kind = ranges.nonlinearities[int(rng.integers(len(ranges.nonlinearities)))]
    nonlinearity = NonlinearityModel(kind, clip_threshold=float(rng.uniform(*ranges.clip_threshold)))
    cfg = ScenarioConfig(
        target=target,
        rirs=rirs,
        noise=noise,
        gain=float(rng.uniform(*ranges.gain)),
        system_delay=float(rng.uniform(*ranges.system_delay)),
        nonlinearity=nonlinearity,
        spr_db=float(rng.uniform(*ranges.spr_db)),
        snr_db=float(rng.uniform(*ranges.snr_db)),
        stft=spec.stft,
    )
    meta = {
        "id": task["id"],
        "split": task["split"],
        "seed": [spec.seed, task["index"]],
        "utterance": task["utterance"],
        "sample_rate": sample_rate,
        "gain": cfg.gain,
        "system_delay": cfg.system_delay,
        "delay_hops": cfg.delay_hops,
        "spr_db": cfg.spr_db,
        "snr_db": cfg.snr_db,
        "level_db": level_db,
        "playback_scale": cfg.playback_scale,
        "nonlinearity": nonlinearity.to_dict(),
        "geometry": rirs.geometry,
        "stft": spec.stft.to_dict(),
        "kalman_reference": spec.kalman_reference,
        "reference": "s.wav",
        "mixture": "y.wav",
        "estimates": {"unprocessed": "y.wav", "kalman": "e.wav"},
    }
    return cfg, meta


def kalman_preprocess(cfg: ScenarioConfig, y: TimeSignal, reference: str = "teacher_forced") -> TimeSignal:
    """Kalman output of a one-shot mixture `y`

    With the :code:`"teacher_forced"` reference, the filter is driven by the loudspeaker signal
    of the mixture. With :code:`"recursive"`, it is driven by its own output delayed by the
    system delay, as it would be inside the loop.
    """
    kalman = KalmanConfig(stft=cfg.stft)
    if reference == "teacher_forced":
        x, _ = teacher_forced_playback(cfg)
        return process_stream(kalman, y, x)[0]
    return KalmanSuppressor(kalman, reference_delay_hops=cfg.delay_hops)(y, cfg.stft)


def build_scenario(spec: ExperimentSpec, corpus, task: dict):
    """Draw the scenario of `task`, returns its (config, mixture, kalman output, metadata)"""
    cfg, meta = draw_scenario(spec, corpus, task)
    mixture = make_teacher_forced_mixture(cfg)
    e = kalman_preprocess(cfg, mixture.y, spec.kalman_reference)
    return cfg, mixture, e, meta


def load_scenario(folder: Union[str, Path]):
    """Scenario of a generated dataset folder, returns its (config, metadata)

    The target and noise are read from ``s.wav`` and ``n.wav`` and the impulse responses are
    recomputed from the recorded geometry, so that the scenario can be streamed through the
    closed loop.
    """
    folder = Path(folder)
    if not (folder / "meta.json").is_file():
        raise DataError(f"{folder} is not a scenario folder (no meta.json)")
    with open(folder / "meta.json", "r") as f:
        meta = json.load(f)
    target = read_wav(folder / "s.wav")
    noise = read_wav(folder / "n.wav", target.sample_rate)
    cfg = ScenarioConfig(
        target=target,
        rirs=rir_set_from_geometry(meta["geometry"], target.sample_rate),
        noise=noise,
        gain=meta["gain"],
        system_delay=meta["system_delay"],
        nonlinearity=NonlinearityModel.from_dict(meta["nonlinearity"]),
        spr_db=meta.get("spr_db"),
        stft=StftConfig.from_dict(meta["stft"]),
    )
    return cfg, meta


def _generate_scenario(task, spec_env=None, corpus=None, output=None):
    spec = ExperimentSpec.from_dict(spec_env)
    _, mixture, e, meta = build_scenario(spec, corpus, task)

    folder = Path(output) / task["id"]
    folder.mkdir(parents=True, exist_ok=True)
    signals = {"s": mixture.s, "n": mixture.n, "d": mixture.d, "y": mixture.y, "e": e}
    for name, signal in signals.items():
        write_wav(folder / f"{name}.wav", signal, spec.wav_subtype)
    dump_json(meta, folder / "meta.json")

    relatives = [f"{task['id']}/{name}.wav" for name in signals] + [f"{task['id']}/meta.json"]
    return {
        "id": task["id"],
        "split": task["split"],
        "seed": meta["seed"],
        "utterance": task["utterance"],
        "files": hash_files(output, relatives),
    }


def generate_dataset(
    spec: ExperimentSpec,
    output: Union[str, Path] = None,
    jobs: int = 1,
    force: bool = False,
    show_progress: bool = True,
) -> RunManifest:
    """Generate train/val/test scenarios with one-shot mixtures and Kalman-preprocessed signals

    Each scenario folder holds ``s.wav`` (reverberant target), ``n.wav`` (noise), ``d.wav``
    (playback), ``y.wav`` (``s + n + d``), ``e.wav`` (Kalman output) and ``meta.json``. The
    dataset folder holds a ``manifest.json`` written once every scenario is done.

    Parameters
    ----------
    spec : ExperimentSpec
        experiment specification
    output : str or Path, optional
        dataset folder, by default ``spec.output``
    jobs : int, optional
        number of worker processes, by default 1
    force : bool, optional
        whether to overwrite an existing dataset, by default False
    show_progress : bool, optional
        whether to show a progress bar, by default True

    Returns
    -------
    RunManifest
    """
    output = Path(output or spec.output)
    corpus = open_corpus(spec)
    tasks = plan_scenarios(spec, corpus)
    _prepare_output(output, force, MANIFEST_NAME)

    corpus_info = corpus.describe()
    info(
        f"generating {len(tasks)} scenarios in {output} from a {corpus_info['type']} corpus of "
        f"{corpus_info['utterances']} utterances ({jobs} job{'s' if jobs > 1 else ''})"
    )
    worker = partial(_generate_scenario, spec_env=spec.to_dict(), corpus=corpus, output=str(output))
    entries = parallel_map(worker, tasks, jobs, show_progress, desc="scenarios", unit="scenarios")

    from larsen import __version__

    manifest = RunManifest(
        spec_hash=spec.hash,
        spec=spec.reproducible_dict(),
        version=__version__,
        corpus=corpus_info,
        scenarios=entries,
    )
    manifest.save(output)
    return manifest


def _generate_rir_set(index, spec_env=None, output=None):
    spec = ExperimentSpec.from_dict(spec_env)
    rng = scenario_rng(spec.seed, index)
    rirs = sample_rir_set(rng, spec.ranges.rir_sampling(spec.rir_length), spec.sample_rate)
    name = f"rirs/{index:05d}"
    folder = Path(output) / name
    folder.mkdir(parents=True, exist_ok=True)
    for key, h in zip(RIR_NAMES, rirs.responses):
        write_wav(folder / f"{key}.wav", h, "double")
    dump_json({"seed": [spec.seed, index], **rirs.geometry}, folder / "geometry.json")
    relatives = [f"{name}/{key}.wav" for key in RIR_NAMES] + [f"{name}/geometry.json"]
    return {"id": name, "split": "rirs", "seed": [spec.seed, index], "utterance": None, "files": hash_files(output, relatives)}


def generate_rirs(
    spec: ExperimentSpec,
    n: int,
    output: Union[str, Path] = None,
    jobs: int = 1,
    force: bool = False,
    show_progress: bool = True,
) -> RunManifest:
    """Generate `n` standalone impulse response sets

    Set ``i`` is drawn from the same generator as scenario ``i`` of :py:func:`generate_dataset`,
    so it holds the responses of that scenario.

    Returns
    -------
    RunManifest
    """
    output = Path(output or spec.output)
    _prepare_output(output, force, "rirs.json")
    worker = partial(_generate_rir_set, spec_env=spec.to_dict(), output=str(output))
    entries = parallel_map(worker, range(n), jobs, show_progress, desc="rirs", unit="sets")

    from larsen import __version__

    manifest = RunManifest(spec.hash, spec.reproducible_dict(), __version__, entries)
    dump_json(manifest.to_dict(), output / "rirs.json")
    return manifest

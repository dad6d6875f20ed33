import glob
from os import path
from pathlib import Path
from typing import List, Union

import numpy as np

from larsen.core.signal import DEFAULT_SAMPLE_RATE, TimeSignal
from larsen.errors import DataError
from larsen.io.audio import read_wav
from larsen.simulations import example_speech


def get_files(ext, folder, depth=0):
    """Files with extension `ext` in `folder` and its sub-folders down to `depth`, sorted"""
    files = []
    for d in range(depth + 1):
        files += glob.iglob(path.join(folder, "*/" * d + f"*{ext}"), recursive=False)
    return sorted(path.abspath(f) for f in files if path.isfile(f))


class Corpus:
    def __init__(
        self,
        folder: Union[str, Path],
        sample_rate: int = DEFAULT_SAMPLE_RATE,
        extension: str = ".wav",
        depth: int = 3,
    ):
        """A folder of mono utterances at a common sample rate

        Utterances are identified by their path relative to `folder`, without extension.

        Parameters
        ----------
        folder : str or Path
            corpus folder
        sample_rate : int, optional
            expected sample rate, by default 16000
        extension : str, optional
            file extension, by default ".wav"
        depth : int, optional
            sub-folder depth searched, by default 3
        """
        self.folder = Path(folder)
        self.sample_rate = sample_rate
        if not self.folder.is_dir():
            raise DataError(f"corpus folder {self.folder} does not exist")
        self.files = get_files(extension, str(self.folder), depth)
        if len(self.files) == 0:
            raise DataError(f"no {extension} file found in {self.folder}")
        self.ids = [
            str(Path(f).relative_to(self.folder.absolute()).with_suffix("").as_posix())
            for f in self.files
        ]
        self._paths = dict(zip(self.ids, self.files))

    def __len__(self):
        return len(self.ids)

    def load(self, utterance_id: str) -> TimeSignal:
        if utterance_id not in self._paths:
            raise DataError(f"unknown utterance '{utterance_id}'")
        signal = read_wav(self._paths[utterance_id], self.sample_rate)
        if len(signal) == 0 or signal.energy == 0:
            raise DataError(f"utterance '{utterance_id}' is silent")
        return signal

    def describe(self):
        return {"type": "folder", "folder": self.folder.name, "utterances": len(self)}


class SyntheticCorpus:
    def __init__(self, n: int, duration: float = 4.0, sample_rate: int = DEFAULT_SAMPLE_RATE, seed: int = 0):
        """Speech-like utterances generated on demand by
        :py:func:`~larsen.simulations.example_speech`, for use without a recorded corpus"""
        if n < 1:
            raise DataError("a synthetic corpus needs at least one utterance")
        self.n = int(n)
        self.duration = duration
        self.sample_rate = sample_rate
        self.seed = seed
        self.ids = [f"synthetic_{i:05d}" for i in range(self.n)]

    def __len__(self):
        return self.n

    def load(self, utterance_id: str) -> TimeSignal:
        if utterance_id not in self.ids:
            raise DataError(f"unknown utterance '{utterance_id}'")
        i = self.ids.index(utterance_id)
        return example_speech(self.duration, self.sample_rate, seed=[self.seed, i])

    def describe(self):
        return {"type": "synthetic", "utterances": self.n, "seed": self.seed, "duration": self.duration}


def split_utterances(ids: List[str], counts: dict, rng: np.random.Generator) -> dict:
    """Partition utterance ids into disjoint splits of sizes proportional to `counts`

    Every split with a non-zero count receives at least one utterance.
    """
    active = [name for name, count in counts.items() if count > 0]
    if len(ids) < len(active):
        raise DataError(f"{len(ids)} utterances cannot be split into {len(active)} disjoint splits")
    order = [ids[i] for i in rng.permutation(len(ids))]
    total = sum(counts[name] for name in active)
    sizes = {name: max(1, int(np.floor(len(ids) * counts[name] / total))) for name in active}
    # largest split absorbs the rounding
    largest = max(active, key=lambda name: counts[name])
    sizes[largest] = len(ids) - sum(sizes[name] for name in active if name != largest)
    if sizes[largest] < 1:
        raise DataError(f"{len(ids)} utterances cannot be split into {len(active)} disjoint splits")

    splits, start = {}, 0
    for name in active:
        splits[name] = order[start : start + sizes[name]]
        start += sizes[name]
    return splits

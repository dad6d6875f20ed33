import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Union

from larsen.errors import DataError
from larsen.utils import dump_json, file_sha256

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    """Machine-readable record of a generated dataset

    It holds what is needed to regenerate the dataset bit-identically (specification, seeds,
    code version) and the SHA-256 of every written file. Paths are relative to the dataset
    folder and no timestamp is stored, so that two identical runs produce identical manifests.
    """

    spec_hash: str
    """SHA-256 of the canonical JSON of the experiment specification"""

    spec: dict = field(default_factory=dict)
    """Experiment specification (without the output folder)"""

    version: str = ""
    """larsen version that produced the dataset"""

    corpus: dict = field(default_factory=dict)
    """Utterance corpus the targets were drawn from (see :py:meth:`Corpus.describe`)"""

    scenarios: List[dict] = field(default_factory=list)
    """One entry per scenario: id, split, seed, utterance and files (relative path -> sha256)"""

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, env):
        return cls(**{k: v for k, v in env.items() if k in cls.__dataclass_fields__})

    def save(self, folder: Union[str, Path]) -> Path:
        path = Path(folder) / MANIFEST_NAME
        dump_json(self.to_dict(), path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]):
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.is_file():
            raise DataError(f"no manifest at {path}")
        with open(path, "r") as f:
            return cls.from_dict(json.load(f))

    def split(self, name):
        return [s for s in self.scenarios if s["split"] == name]

    def verify(self, folder: Union[str, Path]) -> List[str]:
        """Relative paths of files missing or differing from their recorded hash"""
        folder = Path(folder)
        bad = []
        for scenario in self.scenarios:
            for relative, digest in scenario["files"].items():
                path = folder / relative
                if not path.is_file() or file_sha256(path) != digest:
                    bad.append(relative)
        return bad


def hash_files(folder: Union[str, Path], relatives: List[str]) -> dict:
    folder = Path(folder)
    return {r: file_sha256(folder / r) for r in sorted(relatives)}

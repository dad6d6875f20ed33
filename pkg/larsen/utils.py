import hashlib
import inspect
import json
from functools import wraps

import numpy as np


def register_args(f):
    """
    When used within a class, saves args and kwargs passed to a function
    (mostly used to record __init__ inputs)
    """

    @wraps(f)
    def inner(*_args, **_kwargs):
        self = _args[0]
        bound = inspect.signature(f).bind(*_args, **_kwargs)
        bound.apply_defaults()
        self.args = {k: v for k, v in bound.arguments.items() if k != "self"}
        return f(*_args, **_kwargs)

    return inner


def from_dict(cls, env):
    """Instantiate a dataclass from a dict ensuring that only class attributes are used"""
    return cls(
        **{k: v for k, v in env.items() if k in inspect.signature(cls).parameters}
    )


def db_to_amplitude(db):
    return 10 ** (db / 20)


def canonical_json(obj):
    """Deterministic JSON text (sorted keys, no whitespace variations)"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_to_builtin)


def dump_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=2, default=_to_builtin)
        f.write("\n")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _to_builtin(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    if hasattr(o, "__fspath__"):
        return str(o)
    raise TypeError(f"Object of type {type(o).__name__} is not JSON serializable")

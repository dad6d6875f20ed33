import json
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from larsen.console_utils import info, table, warning
from larsen.core.stft import StftConfig
from larsen.errors import DataError, LarsenError, ShapeError
from larsen.io.audio import read_wav
from larsen.metrics import LOSS_WEIGHT, evaluate_pair
from larsen.utils import dump_json

METADATA_NAME = "meta.json"
SUMMARY_METRICS = ("si_sdr_db", "spectral_mae", "combined_loss")
GAIN_BUCKETS = (1, 2, 3)


def gain_bucket(gain: float) -> int:
    """G column of a scenario: G rounded to the closest of 1, 2 and 3"""
    return int(np.clip(np.round(gain), GAIN_BUCKETS[0], GAIN_BUCKETS[-1]))


def find_scenarios(folder: Union[str, Path]):
    """Folders holding a ``meta.json``, sorted"""
    return sorted(p.parent for p in Path(folder).rglob(METADATA_NAME))


def evaluate_scenario(
    scenario: Union[str, Path],
    estimates: Optional[Dict[str, str]] = None,
    weight: float = LOSS_WEIGHT,
):
    """Evaluate every estimate of a scenario folder against its reference

    The folder ``meta.json`` gives the reference file, the estimates (method name to file), the
    gain and the STFT of the scenario. Extra `estimates` (e.g. the outputs of a model written
    next to the scenario files) are added to those of the metadata when their file exists.

    Returns
    -------
    list of dict
        one row per estimate, failed pairs have a ``"failed"`` status and the error message
    """
    scenario = Path(scenario)
    with open(scenario / METADATA_NAME, "r") as f:
        meta = json.load(f)

    methods = dict(meta.get("estimates", {}))
    for name, filename in (estimates or {}).items():
        if (scenario / filename).is_file():
            methods[name] = filename
    latencies = meta.get("latency_samples", {})
    config = StftConfig.from_dict(meta["stft"]) if "stft" in meta else StftConfig()
    gain = float(meta.get("gain", 1.0))
    base = {
        "scenario": meta.get("id", scenario.name),
        "split": meta.get("split"),
        "gain": gain,
        "g_bucket": gain_bucket(gain),
    }

    rows = []
    ref, mic = None, None
    for method, filename in sorted(methods.items()):
        row = {**base, "method": method, "status": "ok", "error": None}
        try:
            if ref is None:
                ref = read_wav(scenario / meta.get("reference", "s.wav"))
                if "mixture" in meta and (scenario / meta["mixture"]).is_file():
                    mic = read_wav(scenario / meta["mixture"])
            est = read_wav(scenario / filename, ref.sample_rate)
            if len(est) != len(ref):
                raise ShapeError(f"length mismatch (estimate: {len(est)}, reference: {len(ref)})")
            report = evaluate_pair(
                est,
                ref,
                stft_config=config,
                latency_samples=int(latencies.get(method, 0)),
                mic=mic if mic is not None and len(mic) == len(est) else None,
                weight=weight,
            )
            values = report.to_dict()
            row.update(
                {
                    "si_sdr_db": values["si_sdr_db"],
                    "si_sdr_saturated": values["si_sdr_saturated"],
                    "spectral_mae": values["spectral_mae"],
                    "combined_loss": values["combined_loss"],
                    "erle_db": values["erle_db"],
                    "howling": values["howling"]["detected"],
                }
            )
        except LarsenError as e:
            row.update({"status": "failed", "error": str(e)})
        rows.append(row)
    return rows


@dataclass
class EvaluationResult:
    """Per-pair metrics and their aggregation by method (rows) and G bucket (columns)"""

    rows: pd.DataFrame
    """One row per (scenario, method)"""

    mean: pd.DataFrame = field(default_factory=pd.DataFrame)
    """Mean of each metric, columns are (metric, G)"""

    median: pd.DataFrame = field(default_factory=pd.DataFrame)
    """Median of each metric, columns are (metric, G)"""

    @property
    def failed(self):
        if len(self.rows) == 0:
            return self.rows
        return self.rows[self.rows.status == "failed"]

    def _flat(self, summary):
        flat = summary.copy()
        flat.columns = [f"{metric} G={g}" for metric, g in flat.columns]
        return flat

    def to_dict(self):
        def nested(summary):
            return {
                method: {
                    metric: {str(g): (None if pd.isna(v) else float(v)) for (m, g), v in values.items() if m == metric}
                    for metric in SUMMARY_METRICS
                }
                for method, values in summary.iterrows()
            }

        return {
            "pairs": int(len(self.rows)),
            "failed": int(len(self.failed)),
            "mean": nested(self.mean),
            "median": nested(self.median),
        }

    def save(self, folder: Union[str, Path]):
        folder = Path(folder)
        folder.mkdir(parents=True, exist_ok=True)
        self.rows.to_csv(folder / "evaluation.csv", index=False)
        self._flat(self.mean).to_csv(folder / "summary_mean.csv")
        self._flat(self.median).to_csv(folder / "summary_median.csv")
        dump_json(self.to_dict(), folder / "summary.json")

    def __str__(self):
        if len(self.mean) == 0:
            return "no evaluated pair"
        flat = self._flat(self.mean)
        rows = [[method, *[f"{v:.3f}" for v in values]] for method, values in flat.iterrows()]
        return table(rows, ["method (mean)", *flat.columns])


def summarize(rows: pd.DataFrame, aggfunc: str) -> pd.DataFrame:
    ok = rows[rows.status == "ok"] if len(rows) else rows
    if len(ok) == 0:
        return pd.DataFrame()
    summary = ok.pivot_table(
        index="method", columns="g_bucket", values=list(SUMMARY_METRICS), aggfunc=aggfunc
    )
    return summary.reindex(columns=list(SUMMARY_METRICS), level=0)


def evaluate_directory(
    folder: Union[str, Path],
    estimates: Optional[Dict[str, str]] = None,
    jobs: int = 1,
    show_progress: bool = True,
    weight: float = LOSS_WEIGHT,
) -> EvaluationResult:
    """Evaluate every scenario found under `folder`

    Parameters
    ----------
    folder : str or Path
        dataset or stream output folder, searched recursively for ``meta.json`` files
    estimates : dict, optional
        extra estimates as method name to file name within each scenario folder, by default None
    jobs : int, optional
        number of worker processes, by default 1
    show_progress : bool, optional
        whether to show a progress bar, by default True
    weight : float, optional
        weight of the spectral term of the combined loss, by default 10000

    Returns
    -------
    EvaluationResult
    """
    from larsen.dataset import parallel_map

    folder = Path(folder)
    if not folder.is_dir():
        raise DataError(f"{folder} is not a folder")
    scenarios = find_scenarios(folder)
    if len(scenarios) == 0:
        warning(f"no scenario found in {folder}")
        return EvaluationResult(pd.DataFrame(columns=["scenario", "method", "g_bucket", "status"]))

    worker = partial(evaluate_scenario, estimates=estimates, weight=weight)
    results = parallel_map(worker, scenarios, jobs, show_progress, desc="evaluation", unit="scenarios")
    rows = pd.DataFrame([row for rows in results for row in rows])
    result = EvaluationResult(rows, summarize(rows, "mean"), summarize(rows, "median"))
    info(f"evaluated {len(rows)} pairs from {len(scenarios)} scenarios")
    if len(result.failed):
        warning(f"{len(result.failed)} pairs failed (see the error column)")
    return result

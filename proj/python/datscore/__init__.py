"""DAT scores from genotypes and MRI volumes with multi-kernel ensembles."""

import json
import os

from ._core import (
    DatscoreIOError,
    MklModel,
    NumericalError,
    ValidationError,
    __version__,
    auc,
    fisher_exact_test,
    fit_mkl,
    hwe_exact_test,
    lasso_path,
    paired_one_sided_t,
    read_plink,
    score_new_subjects,
    simulate,
    stratify,
    student_t_upper,
    welch_t_test,
)
from . import _core


def default_config():
    """The default pipeline configuration as a dict."""
    return json.loads(_core.default_config())


def run_pipeline(config, base_dir=None, resume=False):
    """Run every stage. `config` is a dict or a path to a JSON file.

    Returns the parsed metrics summary of the report bundle.
    """
    if isinstance(config, (str, os.PathLike)):
        path = os.fspath(config)
        with open(path) as fh:
            config = json.load(fh)
        base_dir = base_dir or os.path.dirname(os.path.abspath(path))
    report_dir = _core.run_pipeline(json.dumps(config), base_dir or "", resume)
    with open(os.path.join(report_dir, "metrics_summary.json")) as fh:
        return json.load(fh)


__all__ = [
    "DatscoreIOError",
    "MklModel",
    "NumericalError",
    "ValidationError",
    "auc",
    "default_config",
    "fisher_exact_test",
    "fit_mkl",
    "hwe_exact_test",
    "lasso_path",
    "paired_one_sided_t",
    "read_plink",
    "run_pipeline",
    "score_new_subjects",
    "simulate",
    "stratify",
    "student_t_upper",
    "welch_t_test",
]

"""Gaussian fixed-interval smoothing with learned trend compensation.

Thin Python surface over the compiled core: build a state-space model,
generate or load trajectory datasets, run the classical filter/smoother or
the gated learned estimator, train the gate banks in two stages, and
evaluate estimators by pooled RMSE. The compiled module is ``_ebrns``; it is
importable either from the installed package or straight from a CMake build
tree on ``PYTHONPATH``.
"""

import json as _json

try:
    from ._ebrns import (  # type: ignore[attr-defined]
        Bank,
        ConfigError,
        ContractError,
        Dataset,
        Model,
        NumericError,
        Sample,
        Split,
        classic_run,
        evaluate,
        fit_normalization,
        gen_landing,
        gen_temperature,
        learned_run,
        load_checkpoint,
        load_dataset_csv,
        make_bank,
        make_model,
        monte_carlo,
        save_checkpoint,
        save_dataset_csv,
        split_dataset,
    )
    from ._ebrns import train_stage as _train_stage
except ImportError:  # running against a bare build tree
    from _ebrns import (
        Bank,
        ConfigError,
        ContractError,
        Dataset,
        Model,
        NumericError,
        Sample,
        Split,
        classic_run,
        evaluate,
        fit_normalization,
        gen_landing,
        gen_temperature,
        learned_run,
        load_checkpoint,
        load_dataset_csv,
        make_bank,
        make_model,
        monte_carlo,
        save_checkpoint,
        save_dataset_csv,
        split_dataset,
    )
    from _ebrns import train_stage as _train_stage

__all__ = [
    "Bank",
    "ConfigError",
    "ContractError",
    "Dataset",
    "Model",
    "NumericError",
    "Sample",
    "Split",
    "classic_run",
    "evaluate",
    "fit_normalization",
    "gen_landing",
    "gen_temperature",
    "learned_run",
    "load_checkpoint",
    "load_dataset_csv",
    "make_bank",
    "make_model",
    "monte_carlo",
    "save_checkpoint",
    "save_dataset_csv",
    "split_dataset",
    "train_stage",
]


def train_stage(start, split, model, **kwargs):
    """Run one training stage; returns ``(best_bank, report_dict)``.

    The compiled core reports training progress as a JSON string (the same
    bytes the command-line tool writes); this wrapper parses it. Keyword
    arguments mirror the core: ``stage`` (1 or 2), ``lr``, ``batch``,
    ``epochs``, ``tau_a``, ``tau_b``, ``clip``, ``seed``, ``patience``.
    """
    bank, report = _train_stage(start, split, model, **kwargs)
    return bank, _json.loads(report)

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config, parse_regime, regime_label
from .experiment import (
    RunSummary, SeedResult, SweepResult, dump_from_checkpoint, dump_reward_comparison, gradcheck_suite, run,
    run_seed, sweep, theorem1_suite,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "config_from_dict", "load_config", "parse_regime", "regime_label",
    "RunSummary", "SeedResult", "SweepResult", "dump_from_checkpoint", "dump_reward_comparison",
    "gradcheck_suite", "run", "run_seed", "sweep", "theorem1_suite",
]

from .analyze import analyze, gossip_budget, sdbp_budget
from .config import ALGORITHMS, ExperimentConfig, InstanceParams
from .runner import RunKey, aggregate, cmd_run, execute
from .verify import SUITES, Check, run_suite

__all__ = ["ExperimentConfig", "InstanceParams", "ALGORITHMS", "cmd_run", "execute", "aggregate",
           "RunKey", "analyze", "sdbp_budget", "gossip_budget", "run_suite", "SUITES", "Check"]

from .gossip import run_gossip_fvi
from .locality import indistinguishability_check, lightcone_check
from .network import DEFAULT_VALUE_WIDTH, Message, Network, NetworkRound
from .report import RunReport
from .sdbp import run_broadcast, run_flooding, run_sdbp, run_sdbp_bandwidth

__all__ = ["run_sdbp", "run_gossip_fvi", "run_broadcast", "run_sdbp_bandwidth", "run_flooding",
           "indistinguishability_check", "lightcone_check", "RunReport", "Network",
           "NetworkRound", "Message", "DEFAULT_VALUE_WIDTH"]

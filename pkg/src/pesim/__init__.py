"""Switch-level simulation and verification of dynamic CMOS priority encoders."""

from .behavior import cascade, pe8, pe_general
from .designs import (build_cascaded, build_charge_share_prone_pe8, build_race_prone_pe8,
                      build_robust_pe8, get_design)
from .netlist import Netlist, device_count, format_netlist, parse_netlist, validate
from .sim import NodeState, SimConfig, Simulator, Stimulus, resolve, sample, simulate, switching_activity
from .verify import (Report, Scenario, cascade_check, charge_share_scan, exhaustive_equivalence,
                     race_sweep, switching_audit)

__version__ = "0.1.0"

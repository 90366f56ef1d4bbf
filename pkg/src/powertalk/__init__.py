"""Droop-modulated powerline signaling and distributed dispatch for DC microgrids.

The package simulates information exchange between droop-controlled DER
converters over the grid they share: converters signal by deviating their
reference voltages, peers read the bus-voltage response, and the decoded
aggregate capacities drive a fully distributed merit-order dispatch.
"""

from .channel import (ChannelModel, NoiseModel, lambda_budget, linearize,
                      observe_slot, power_deviation, slot_noise_sigma)
from .detector import (LevelTable, SubphaseEstimate, build_level_table,
                       cancel_self, map_detect, map_detect_many,
                       reconstruct_aggregate)
from .dispatch import (DispatchOutcome, base_cost, distributed_policy,
                       oracle_centralized, period_cost, settle_imbalance)
from .errors import (AmplitudeTooLarge, GroupTooLarge, NoSolution, NotConverged,
                     OutOfRange, ParseError, PowerTalkError, ScheduleInfeasible,
                     SingularJacobian, ValidationError)
from .experiments import (Table, experiment_cost_tradeoff, experiment_detection,
                          experiment_quantization, gnuplot_script, read_table,
                          render_table, run_scenario_period, summary_table,
                          trace_table, write_table)
from .grid import (DroopSetting, MicrogridConfig, OperatingPoint,
                   build_admittance, der_output, kcl_residual,
                   solve_steady_state)
from .protocol import (MonteCarloResult, PeriodPlan, PeriodTrace, default_droop,
                       monte_carlo, prepare_period, run_period, trial_seed)
from .scenario import Scenario, builtin_scenario_path, load_scenario
from .signaling import (CapacityWord, ProtocolConfig, SlotPlan, bits_of_index,
                        encode_capacity, modulate, quantize, schedule)

__version__ = "0.1.0"

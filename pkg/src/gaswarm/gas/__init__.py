from .assembly import (IncompleteMapping, MissingForecast, RowSpec, UnboundedBigM,
                       assemble_compressor_block, assemble_flow_direction, assemble_mode_coupling,
                       assemble_node_balance, assemble_pipe_rows, assemble_slack_and_objective,
                       assemble_valve_block, continuity_coefficient, friction_coefficient,
                       gravity_coefficient)
from .build import (OperationModeSequence, build_instance_milp, build_state_model, extract_state,
                    mode_sequence, state_point)
from .io import (FormatError, load_instance, load_network, network_from_dict, network_to_dict,
                 save_instance, save_network)
from .network import (CompressorStation, Configuration, GasConstants, GasNetwork, Instance,
                      NetworkError, NetworkState, Node, NonpositivePressure, ObjectiveWeights,
                      OperationMode, Pipe, PipeParameters, SamplingReference, Valve,
                      compute_pipe_velocities, pipe_parameters)
from .stations import rest_state, station_d_template, toy_station

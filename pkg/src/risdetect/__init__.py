"""Simulation and detection of non-cooperative RIS activity in a MIMO-OFDM uplink."""

from .config import (Config, DetectorSettings, SurfaceSpec, SweepSettings,
                     SystemConfig, TrainingSettings, activate_surface,
                     config_from_items, parse_config)
from .channel import (ChannelRealization, CascadedPaths, DirectPaths,
                      SurfaceState, draw_realization, draw_ris_phases,
                      equivalent_direct_paths, freq_response, raised_cosine,
                      simulate_symbol, surface_matrix, ula_steering,
                      ura_steering)
from .detectors import (HotellingDetector, LinearKernel, RbfKernel,
                        ReferenceBank, ScanBDetector, build_reference, h_fn,
                        median_heuristic_gamma, mmd_unbiased)
from .errors import ConfigError, ContractError, FormatError, TrainingDiverged
from .harness import (DETECTOR_KINDS, EpisodeResult, MonteCarloReport,
                      calibrate_threshold, generate_training_set, monte_carlo,
                      run_episode)
from .svdd import (DsvddModel, MlpParams, anomaly_score, compute_center,
                   flatten_observation, forward, loss_gradient, svdd_loss,
                   train_dsvdd, unflatten_observation)

__version__ = "0.1.0"

"""Coupled-channel z-evolution scattering with time observables."""
from .errors import ConfigError, NumericalError, PreconditionError, ZevolError
from .kspace import ChannelGrid, Units, build_grid, classify_channel
from .observables import (AmplitudeSet, PacketSpec, TimeStatistics, build_packet, crossing_time,
                          delay_times, dwell_time_surface, dwell_time_volume, out_currents,
                          output_amplitudes, presence_norm)
from .potential import Harmonic, PotentialModel, Profile
from .propagator import SlabSolution, transfer_matrix
from .smatrix import SMatrix, extract_smatrix

__version__ = "0.1.0"

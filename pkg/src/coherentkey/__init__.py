"""Finite-block simulations of coherent-information protocols.

Key generation and distillation over cqq sources, entanglement generation,
distillation and transmission, plus the entropy, typicality, coding and
optimization tools they are built from.
"""

from .channels import (CqqSource, ProtocolParams, QuantumChannel, TargetResource, TripartiteState,
                       channel_source, channel_to_tripartite, maximally_entangled_input, overlap_source,
                       standard_channel)
from .entropy import coherent_information, entropy_report, holevo_information, von_neumann_entropy
from .optimizer import InputParameterization, maximize_rate
from .protocols import (ProtocolOutcome, run_entanglement_distillation, run_entanglement_generation,
                        run_entanglement_transmission, run_key_distillation, run_key_generation)

__version__ = "0.1.0"

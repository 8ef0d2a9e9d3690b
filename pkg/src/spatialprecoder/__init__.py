"""Fixed linear spatial precoding for space-time block coded MIMO systems.

Designs transmit precoders from antenna-placement geometry alone (no channel
feedback) by minimising pairwise-error-probability upper bounds through a
generalised water-filling allocation, and validates them with reproducible
Monte-Carlo link-level experiments over mode-domain and ring-scatterer
channel models.
"""

__version__ = "0.1.0"

from .arrays import (
    AntennaArray,
    ApertureBasis,
    config_matrix,
    make_uca,
    make_ula,
    mode_count,
    smf,
)
from .channel import (
    ChannelRealization,
    GaussianMatrixSampler,
    ModalCorrelation,
    NotPositiveSemidefiniteError,
    assemble_channel,
    channel_covariance,
    isotropic_modal_corr,
    psd_sqrt,
    realize_channel,
    realize_from_covariance,
    realize_scattering,
    save_complex_csv,
    scattering_covariance,
    uniform_limited_modal_corr,
)
from .precoder import (
    AllocationBudget,
    EigenmodeProfile,
    PrecoderSolution,
    SingularModeProfileError,
    WaterfillError,
    coherent_precoder,
    differential_precoder,
    eigenmodes,
    kkt_level_residuals,
    pep_bound_coherent,
    pep_bound_differential,
    waterfill_general,
    waterfill_miso,
    waterfill_three_rx,
    waterfill_two_rx,
)
from .scatterers import (
    AbdiRingSpec,
    ChenRingSpec,
    abdi_correlation,
    abdi_covariance,
    chen_correlation,
    chen_covariance,
    chen_space_time_covariance,
)
from .sim import (
    AbdiScattering,
    BerPoint,
    ChenScattering,
    Experiment,
    IidScattering,
    KroneckerModalScattering,
    PepPoint,
    Trials,
    interpolate_snr_at_ber,
    precoding_gain,
    run_ber,
    run_pep,
)
from .stbc import (
    Codebook,
    CodebookError,
    DiffState,
    build_codebook,
    codeword_distance_scan,
    diff_decode,
    diff_encode,
    ml_decode_coherent,
    psk_alphabet,
)

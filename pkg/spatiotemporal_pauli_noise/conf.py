from django.conf import settings


def get_setting(name, default=None):
    """Get setting with SPPNOISE_ prefix."""
    if not settings.configured:
        return default
    return getattr(settings, f"SPPNOISE_{name}", default)


DEFAULT_SETTINGS = {
    # dense linear algebra
    "DENSE_DIM_CAP": 4096,
    "SPECTRUM_DIM_CAP": 256,
    "HERMITIAN_TOL": 1e-12,
    "UNITARY_TOL": 1e-10,
    "CP_TOL": 1e-10,
    "CAUSALITY_TOL": 1e-8,
    "SUPPORT_TOL": 1e-12,
    "SUPPORT_MASS_TOL": 1e-10,
    "IMAG_TOL": 1e-10,
    # SPP construction and sampling
    "CLAMP_BAND": 1e-9,
    "RANK_RTOL": 1e-10,
    # transfer operators
    "DEGENERACY_TOL": 1e-10,
    "HMM_TOL": 1e-10,
    # storm model
    "STORM_Q1_BUDGET": 0.03,
    "STORM_MIN_XI": 1.0,
    # QCA bath
    "QCA_BOUNDARY": "open",
    "QCA_FIT_CUTOFF": 0.02,
    "QCA_MAX_LAG": 2000,
    "QCA_CYCLES": 100000,
    "QCA_BURN_IN": 20000,
    "QCA_TRAJECTORIES": 4,
    "QCA_MARGINAL_CYCLES": 100000,
    "QCA_ORACLE_MAX_SITES": 4,
    "QCA_ORACLE_MAX_CYCLES": 3,
    "QCA_CHUNK": 1024,
    # memory experiments
    "QEC_ROUNDS_FACTOR": 3,
    "QEC_BASELINE_P": 0.001,
    "QEC_BATCH_SIZE": 10000,
    "DECODER_EXACT_LIMIT": 16,
    "DECODER_CACHE_SIZE": 4096,
    # frame against reference simulation
    "PATTERN_MIN_COUNT": 20,
    "PATTERN_TV_TOL": 0.01,
    # parallel sweeps, 1 runs in process
    "WORKERS": 1,
}

"""Evaluation metrics: normalized PSD error, matrix conditioning, SIR/SNR."""

import numpy as np

PSD_ERROR_FLOOR_DB = -100.0
SIR_CAP_DB = 100.0


def psd_error(phi_true, phi_est, silence_floor_db=-60.0):
    """Full-band normalized PSD estimation error in dB.

    ``10*log10( (1/F) sum_k  mean_t |Phi - Phi_hat| / mean_t |Phi| )``
    where the frame means skip frames whose true PSD is more than
    ``silence_floor_db`` below the bin's peak (silent-frame exclusion),
    and bins with identically zero truth are excluded from the band
    average.  The result is floored at -100 dB.
    """
    phi_true = np.asarray(phi_true, dtype=float)
    phi_est = np.asarray(phi_est, dtype=float)
    if phi_true.shape != phi_est.shape:
        raise ValueError(f"shape mismatch: {phi_true.shape} vs {phi_est.shape}")
    if phi_true.ndim == 1:
        phi_true = phi_true[None, :]
        phi_est = phi_est[None, :]
    if not np.any(phi_true > 0):
        raise ValueError("true PSD is identically zero")
    ratios = []
    floor = 10 ** (silence_floor_db / 10)
    for b in range(phi_true.shape[1]):
        col = phi_true[:, b]
        peak = col.max()
        if peak <= 0:
            continue
        active = col > peak * floor
        if not np.any(active):
            continue
        num = np.abs(col[active] - phi_est[active, b]).mean()
        den = np.abs(col[active]).mean()
        ratios.append(num / den)
    value = 10 * np.log10(max(np.mean(ratios), 10 ** (PSD_ERROR_FLOOR_DB / 10)))
    return float(max(value, PSD_ERROR_FLOOR_DB))


def condition_number(matrix):
    """Ratio of the largest to the smallest singular value."""
    m = np.asarray(getattr(matrix, "matrix", matrix))
    if not np.any(m != 0):
        raise ValueError("zero matrix has no condition number")
    s = np.linalg.svd(m, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def _project_energy(signal, stems):
    """Energy of a signal split into per-stem components plus residual."""
    comp = np.zeros(stems.shape[1])
    resid = signal.astype(float).copy()
    for ell in range(stems.shape[1]):
        s = stems[:, ell]
        e = float(s @ s)
        if e == 0:
            raise ValueError(f"ground-truth stem {ell} is silent")
        c = float(signal @ s) / e
        comp[ell] = c * c * e
        resid -= c * s
    return comp, float(resid @ resid)


def _ratio_db(num, den):
    if den <= num * 10 ** (-SIR_CAP_DB / 10):
        return SIR_CAP_DB
    if num == 0:
        return -SIR_CAP_DB
    return float(min(10 * np.log10(num / den), SIR_CAP_DB))


def sir_snr_improvement(estimated_stems, true_stems, mixture):
    """Energy-ratio SIR and SNR per source, and improvement over the mixture.

    Signals are decomposed by least-squares projection onto the
    ground-truth stems; SIR is target-to-interference energy, SNR is
    target-to-residual.  Ratios are capped at +/-100 dB.

    Returns
    -------
    dict with arrays ``sir_db``, ``snr_db``, ``sir_improvement_db``,
    ``snr_improvement_db`` of shape (L,).
    """
    est = np.asarray(estimated_stems, dtype=float)
    stems = np.asarray(true_stems, dtype=float)
    mix = np.asarray(mixture, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    if stems.ndim == 1:
        stems = stems[:, None]
    if est.shape != stems.shape or mix.shape[0] != stems.shape[0]:
        raise ValueError("stem/mixture lengths must match")
    L = stems.shape[1]
    sir = np.zeros(L)
    snr = np.zeros(L)
    sir_mix = np.zeros(L)
    snr_mix = np.zeros(L)
    for ell in range(L):
        for out, signal in ((0, est[:, ell]), (1, mix)):
            comp, resid = _project_energy(signal, stems)
            target = comp[ell]
            interf = comp.sum() - target
            vals = (_ratio_db(target, interf), _ratio_db(target, resid))
            if out == 0:
                sir[ell], snr[ell] = vals
            else:
                sir_mix[ell], snr_mix[ell] = vals
    return {
        "sir_db": sir,
        "snr_db": snr,
        "sir_improvement_db": sir - sir_mix,
        "snr_improvement_db": snr - snr_mix,
    }

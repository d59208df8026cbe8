"""RF fingerprinting: hardware impairments, signatures, robust auth.

Each transmitter is marked by small analog defects: sampling rate
offset, carrier frequency offset, and I/Q amplitude/phase imbalance.
The receiver estimates five signature features from the frame preamble
and authenticates them in two layers: a robust minimum-covariance
ellipsoid over all authorized signatures, then validation against the
claimed sender's own signature model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2

from . import waveform

SIGNATURE_DIM = 5
LTS_START = waveform.STS_REPEATS * 128 + waveform.LTS_CP  # 288
_SEGMENT = 128


class PreambleNotFound(Exception):
    """Raised when no credible preamble correlation peak exists."""


@dataclass(frozen=True)
class ImpairmentProfile:
    """Per-transmitter analog defect set.

    Amplitude imbalance is in dB, phase imbalance in degrees.  The
    sampling offset is expressed as an interpolation/decimation pair
    (p, q); q defaults to p - user_id, about 100 PPM per index.
    """

    user_id: int
    psi_db: float = 0.0
    phi_deg: float = 0.0
    cfo_hz: float = 0.0
    p: int = 10_000
    q: int | None = None

    def __post_init__(self):
        if self.q is None:
            object.__setattr__(self, "q", self.p - self.user_id)
        if self.q < 1:
            raise ValueError("decimation factor must stay positive")

    @property
    def kappa_i(self):
        return 10.0 ** (0.5 * self.psi_db / 20.0)

    @property
    def kappa_q(self):
        return 10.0 ** (-0.5 * self.psi_db / 20.0)

    @property
    def sro_ppm(self):
        return (1.0 - self.p / self.q) * 1e6


def authorized_profiles(n_users, psi_step_db=1.0, phi_step_deg=10.0,
                        cfo_step_hz=2e3, start=1):
    """Profiles on the standard grid: user j gets j steps of each defect."""
    return [
        ImpairmentProfile(
            user_id=j,
            psi_db=j * psi_step_db,
            phi_deg=j * phi_step_deg,
            cfo_hz=j * cfo_step_hz,
        )
        for j in range(start, start + n_users)
    ]


def outlier_profiles(n_outliers, n_authorized, **kwargs):
    """Continuation of the grid past the authorized set."""
    return authorized_profiles(n_outliers, start=n_authorized + 1, **kwargs)


def resample_linear(samples, p, q):
    """Resample by p/q (read the input on a grid of step q/p)."""
    samples = np.asarray(samples, dtype=np.complex128)
    n = len(samples)
    positions = np.arange(n) * (q / p)
    positions = np.minimum(positions, n - 1)
    base = np.arange(n, dtype=np.float64)
    return np.interp(positions, base, samples.real) + 1j * np.interp(
        positions, base, samples.imag
    )


def apply_impairments(frame, profile):
    """Transmit-side defect chain: resample, CFO rotation, I/Q imbalance."""
    x = resample_linear(frame.samples, profile.p, profile.q)
    if profile.cfo_hz != 0.0:
        t = np.arange(len(x)) / frame.sample_rate_hz
        x = x * np.exp(2j * np.pi * profile.cfo_hz * t)
    phi_half = 0.5 * profile.phi_deg * np.pi / 180.0
    imb_i = x.real * profile.kappa_i * np.exp(-1j * phi_half)
    imb_q = x.imag * profile.kappa_q * np.exp(1j * (np.pi / 2 + phi_half))
    out = imb_i + imb_q
    return waveform.IqFrame(
        samples=out,
        sample_rate_hz=frame.sample_rate_hz,
        label=frame.label,
        channel_model=frame.channel_model,
        snr_db=frame.snr_db,
        mcs_id=frame.mcs_id,
        n_data_symbols=frame.n_data_symbols,
        payload_bits=frame.payload_bits,
    )


@dataclass
class Signature:
    coarse_cfo_hz: float
    fine_cfo_hz: float
    timing_offset: float
    psi_db: float
    phi_deg: float

    def as_array(self):
        return np.array([
            self.coarse_cfo_hz, self.fine_cfo_hz, self.timing_offset,
            self.psi_db, self.phi_deg,
        ])


def _lag_cfo(x, start, sample_rate_hz):
    """CFO from the phase advance across one 128-sample repetition."""
    a = x[start : start + _SEGMENT]
    b = x[start + _SEGMENT : start + 2 * _SEGMENT]
    z = np.sum(np.conj(a) * b)
    return float(np.angle(z) * sample_rate_hz / (2.0 * np.pi * _SEGMENT))


def _parabolic_peak(mags, idx):
    if not 0 < idx < len(mags) - 1:
        return 0.0
    y0, y1, y2 = mags[idx - 1], mags[idx], mags[idx + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom == 0:
        return 0.0
    return float(0.5 * (y0 - y2) / denom)


def detect_preamble(samples, search=32, min_correlation=0.3, lead=8):
    """Locate the long training part; returns fractional sample offset.

    Cross-correlates against the known 256-sample long training block
    over start offsets [-lead, search).  The window reaches before the
    nominal position so the peak always has both neighbors and the
    parabolic refinement can resolve sub-sample shifts.  Raises
    PreambleNotFound when the best normalized correlation stays under
    min_correlation.
    """
    template = waveform.preamble_samples()[LTS_START : LTS_START + 2 * _SEGMENT]
    t_norm = np.linalg.norm(template)
    offsets = range(-min(lead, LTS_START), search)
    mags = np.zeros(len(offsets))
    for i, s in enumerate(offsets):
        seg = samples[LTS_START + s : LTS_START + s + 2 * _SEGMENT]
        if len(seg) < 2 * _SEGMENT:
            break
        denom = t_norm * np.linalg.norm(seg)
        if denom == 0:
            continue
        mags[i] = np.abs(np.vdot(template, seg)) / denom
    idx = int(np.argmax(mags))
    if mags[idx] < min_correlation:
        raise PreambleNotFound(f"best preamble correlation {mags[idx]:.3f}")
    return offsets[idx] + _parabolic_peak(mags, idx)


def _carrier_fit(rx, clean, t, f):
    """Two-column fit at carrier f: direct path plus its mirror image."""
    rot = np.exp(2j * np.pi * f * t)
    design = np.column_stack([clean * rot, np.conj(clean) / rot])
    coef, *_ = np.linalg.lstsq(design, rx, rcond=None)
    resid = rx - design @ coef
    return coef, float(np.real(np.vdot(resid, resid)))


def extract_signature(frame, sample_rate_hz=waveform.SAMPLE_RATE_HZ,
                      search=32, cfo_search_hz=30e3):
    """Five-feature fingerprint from the frame preamble.

    Features: coarse CFO (phase advance across short training
    repeats), fine CFO (concentrated least squares over the preamble),
    fractional timing offset, and the I/Q imbalance pair (psi in dB,
    phi in degrees).  The least squares model regresses the received
    preamble on the known one and its conjugate image, with the
    carrier folded into both columns; scanning the carrier globally
    and keeping the best fit keeps the estimates unbiased even when a
    strong image component corrupts the plain autocorrelation
    estimate.
    """
    x = np.asarray(frame.samples, dtype=np.complex128)
    offset = detect_preamble(x, search=search)
    shift = max(int(round(offset)), 0)

    coarse = _lag_cfo(x, shift, sample_rate_hz)

    clean = waveform.preamble_samples()
    n = len(clean)
    rx = x[shift : shift + n]
    t = np.arange(n) / sample_rate_hz

    # global coarse grid, then a fine grid with parabolic refinement
    grid = np.arange(-cfo_search_hz, cfo_search_hz + 1.0, 1000.0)
    residuals = np.array([_carrier_fit(rx, clean, t, f)[1] for f in grid])
    center = grid[int(np.argmin(residuals))]
    grid = center + np.arange(-8, 9) * 125.0
    residuals = np.array([_carrier_fit(rx, clean, t, f)[1] for f in grid])
    k = int(np.argmin(residuals))
    fine = grid[k] + 125.0 * _parabolic_peak(-residuals, k)
    (a, b), _ = _carrier_fit(rx, clean, t, fine)
    if a == 0:
        raise PreambleNotFound("degenerate preamble fit")
    ratio = (1.0 + b / a) / (1.0 - b / a)
    psi = 20.0 * np.log10(np.abs(ratio))
    phi = -np.degrees(np.angle(ratio))
    return Signature(
        coarse_cfo_hz=coarse,
        fine_cfo_hz=float(fine),
        timing_offset=offset,
        psi_db=float(psi),
        phi_deg=float(phi),
    )


def _random_wifi(rng, frame_len):
    grid = waveform.OfdmGrid()
    fit = waveform.max_data_symbols(frame_len, grid)
    mcs_id = int(rng.integers(0, len(waveform.MCS_TABLE)))
    n_syms = int(rng.integers(min(3, fit), fit + 1))
    bits_per_symbol = 40 * waveform.BITS_PER_SYMBOL[waveform.MCS_TABLE[mcs_id][0]]
    payload = (n_syms * bits_per_symbol) // 8
    return waveform.gen_wifi(mcs_id, payload, grid=grid, rng=rng,
                             frame_len=frame_len)


def build_signature_dataset(profiles, n_per_user, snr_grid, seed=0,
                            channel_model="A", frame_len=2048):
    """Signature rows for every profile: (user_id, snr_db, Signature)."""
    rng = np.random.default_rng(seed)
    rows = []
    for profile in profiles:
        for _ in range(n_per_user):
            snr_db = float(rng.choice(snr_grid))
            frame = _random_wifi(rng, frame_len)
            frame = apply_impairments(frame, profile)
            if channel_model is not None:
                frame = waveform.apply_channel(frame, channel_model, rng)
            frame = waveform.add_awgn(frame, snr_db, rng)
            sig = extract_signature(frame)
            rows.append((profile.user_id, snr_db, sig))
    return rows


def signatures_array(rows):
    return np.array([sig.as_array() for _, _, sig in rows])


SIGNATURE_CSV_HEADER = (
    "user_id,snr_db,coarse_cfo_hz,fine_cfo_hz,timing_offset,psi_db,phi_deg"
)


def save_signatures(rows, path):
    with open(path, "w") as fh:
        fh.write(SIGNATURE_CSV_HEADER + "\n")
        for user_id, snr_db, sig in rows:
            vals = ",".join(repr(float(v)) for v in sig.as_array())
            fh.write(f"{int(user_id)},{float(snr_db)!r},{vals}\n")


def load_signatures(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != SIGNATURE_CSV_HEADER:
            raise ValueError("unrecognized signature file header")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 7:
                raise ValueError("malformed signature row")
            rows.append(
                (int(parts[0]), float(parts[1]),
                 Signature(*(float(v) for v in parts[2:])))
            )
    return rows


# ---------------------------------------------------------------------------
# Robust estimation and the two-layer authentication scheme.

@dataclass
class McdModel:
    mean: np.ndarray
    cov: np.ndarray
    threshold: float  # squared-distance cutoff
    h: int = 0
    support: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    regularized: bool = False

    def __post_init__(self):
        self.cov_inv = np.linalg.inv(self.cov)


def mahalanobis_sq(x, model):
    diff = np.atleast_2d(np.asarray(x, dtype=np.float64)) - model.mean
    d2 = np.einsum("ij,jk,ik->i", diff, model.cov_inv, diff)
    return float(d2[0]) if np.ndim(x) == 1 else d2


def default_threshold(dim=SIGNATURE_DIM, quantile=0.975):
    return float(chi2.ppf(quantile, dim))


def _cov_of(x):
    mean = x.mean(axis=0)
    diff = x - mean
    return mean, diff.T @ diff / len(x)


def _regularize(cov):
    d = cov.shape[0]
    scale = max(np.trace(cov) / d, 1.0)
    return cov + 1e-9 * scale * np.eye(d)


def gaussian_fit(x, threshold=None):
    """Plain Gaussian signature model (used per user)."""
    x = np.asarray(x, dtype=np.float64)
    mean, cov = _cov_of(x)
    regularized = False
    if np.linalg.matrix_rank(cov) < cov.shape[0]:
        cov = _regularize(cov)
        regularized = True
    return McdModel(
        mean=mean,
        cov=cov,
        threshold=default_threshold(x.shape[1]) if threshold is None else threshold,
        h=len(x),
        support=np.arange(len(x)),
        regularized=regularized,
    )


def calibrate_threshold(model, x, margin=3.0):
    """Re-anchor the acceptance cutoff on training distances.

    The chi-square quantile is exact for one Gaussian cluster but far
    too tight for a multi-user signature population, whose pooled
    squared distances are heavy-tailed.  Scenario code therefore sets
    the cutoff at ``margin`` times the largest squared distance seen
    in training.
    """
    d2 = mahalanobis_sq(np.atleast_2d(np.asarray(x, dtype=np.float64)), model)
    return replace(model, threshold=float(margin * np.max(d2)))


def _c_step_loop(x, subset, h, max_csteps):
    det_prev = None
    for _ in range(max_csteps):
        mean, cov = _cov_of(x[subset])
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0:
            cov = _regularize(cov)
            sign, logdet = np.linalg.slogdet(cov)
        inv = np.linalg.inv(cov)
        diff = x - mean
        d2 = np.einsum("ij,jk,ik->i", diff, inv, diff)
        new_subset = np.sort(np.argsort(d2, kind="stable")[:h])
        if det_prev is not None and (
            logdet >= det_prev - 1e-12 and np.array_equal(new_subset, subset)
        ):
            break
        det_prev = logdet
        subset = new_subset
    return subset, logdet


def mcd_fit(x, h=None, n_restarts=50, max_csteps=20, seed=0, threshold=None,
            reweight=True):
    """Minimum covariance determinant fit with concentration steps.

    Random (d+1)-point seeds are concentrated by repeatedly refitting
    on the h points closest to the current estimate; the h-subset with
    the smallest covariance determinant wins.  The covariance is
    rescaled for consistency at the normal model; the customary
    one-step reweighting then refits on every point inside the 97.5%
    cutoff of the raw estimate, which undoes the raw subset's bias
    toward one mode of clustered data.  The default squared-distance
    threshold is the chi-square 97.5% point.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if n < 10:
        raise ValueError("need at least 10 signatures")
    if h is None:
        h = int(np.ceil((n + d + 1) / 2))
    if not n / 2 <= h <= n:
        raise ValueError("subset size must cover at least half the data")
    rng = np.random.default_rng(seed)
    best = (np.inf, None)
    for _ in range(n_restarts):
        seed_subset = rng.choice(n, size=min(d + 1, n), replace=False)
        subset, logdet = _c_step_loop(x, np.sort(seed_subset), h, max_csteps)
        if logdet < best[0]:
            best = (logdet, subset)
    subset = best[1]
    mean, cov = _cov_of(x[subset])

    alpha = h / n
    cov = cov * (alpha / chi2.cdf(chi2.ppf(alpha, d), d + 2))

    if reweight:
        cutoff = chi2.ppf(0.975, d)
        inv = np.linalg.inv(_regularize(cov) if np.linalg.slogdet(cov)[0] <= 0 else cov)
        diff = x - mean
        d2 = np.einsum("ij,jk,ik->i", diff, inv, diff)
        keep = np.flatnonzero(d2 <= cutoff)
        if len(keep) > d:
            mean, cov = _cov_of(x[keep])
            cov = cov * (0.975 / chi2.cdf(cutoff, d + 2))
            subset = keep

    regularized = False
    sign, _ = np.linalg.slogdet(cov)
    if sign <= 0 or np.linalg.cond(cov) > 1e12:
        cov = _regularize(cov)
        regularized = True
    return McdModel(
        mean=mean,
        cov=cov,
        threshold=default_threshold(d) if threshold is None else threshold,
        h=h,
        support=subset,
        regularized=regularized,
    )


def authenticate(sig, model, threshold=None):
    """Layer 1: A when the signature sits inside the robust ellipsoid."""
    cutoff = model.threshold if threshold is None else threshold
    vec = sig.as_array() if isinstance(sig, Signature) else np.asarray(sig)
    return "A" if mahalanobis_sq(vec, model) <= cutoff else "O"


def identify(sig, user_models):
    """Layer 2: closest per-user signature model."""
    if not user_models:
        raise ValueError("no user models fitted")
    vec = sig.as_array() if isinstance(sig, Signature) else np.asarray(sig)
    return min(user_models, key=lambda uid: mahalanobis_sq(vec, user_models[uid]))


def validate_claim(sig, claimed_id, user_models, threshold=None):
    """Does the signature fit the claimed sender's own model?"""
    model = user_models.get(claimed_id)
    if model is None:
        return False
    cutoff = model.threshold if threshold is None else threshold
    vec = sig.as_array() if isinstance(sig, Signature) else np.asarray(sig)
    return bool(mahalanobis_sq(vec, model) <= cutoff)


def authenticate_claim(sig, claimed_id, pooled_model, user_models):
    """Two-layer decision: robust gate, then claim validation."""
    if authenticate(sig, pooled_model) != "A":
        return "O"
    return "A" if validate_claim(sig, claimed_id, user_models) else "O"


def fit_user_models(rows, margin=None):
    """Per-user Gaussian models from signature dataset rows.

    With ``margin`` set, each user's cutoff is calibrated on that
    user's own training distances instead of the chi-square default.
    """
    by_user = {}
    for user_id, _, sig in rows:
        by_user.setdefault(user_id, []).append(sig.as_array())
    models = {}
    for uid, vecs in by_user.items():
        x = np.array(vecs)
        model = gaussian_fit(x)
        if margin is not None:
            model = calibrate_threshold(model, x, margin)
        models[uid] = model
    return models

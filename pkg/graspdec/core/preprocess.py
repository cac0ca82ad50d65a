"""
Notch and Butterworth filter design, zero-phase application and the
five-band filter bank.

Processing order for a recording: 60 Hz notch, then the 0.5-40 Hz
broadband band-pass, then the per-band filter bank. Every filter is held
as second-order sections and applied forward-backward.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from loguru import logger
from scipy import signal

from graspdec.core.errors import DesignError, SignalTooShortError
from graspdec.core.model import BandDefinition, BandName, Recording

ALLOWED_ORDERS = (2, 4, 6, 8)
DEFAULT_NOTCH_HZ = 60.0
DEFAULT_NOTCH_Q = 30.0
BROADBAND_LOW_HZ = 0.5
BROADBAND_HIGH_HZ = 40.0
FILTER_BANK_ORDER = 4


class FilterKind(str, Enum):
    NOTCH = "Notch"
    BANDPASS = "Bandpass"
    LOWPASS = "Lowpass"


@dataclass(frozen=True)
class FilterDesign:
    kind: FilterKind
    low_hz: float
    high_hz: float
    order: int
    sample_rate_hz: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "low_hz": self.low_hz,
            "high_hz": self.high_hz,
            "order": self.order,
            "sample_rate_hz": self.sample_rate_hz,
        }


@dataclass(frozen=True, eq=False)
class IirFilter:
    sections: np.ndarray  # [n_sections x 6]: b0 b1 b2 1 a1 a2
    design_meta: FilterDesign

    def __post_init__(self):
        sos = np.atleast_2d(np.array(self.sections, dtype=float))
        if sos.shape[1] != 6:
            raise DesignError(f"second-order sections need 6 coefficients per row, got {sos.shape[1]}")
        if not np.isfinite(sos).all():
            raise DesignError("filter coefficients must be finite")
        if not np.allclose(sos[:, 3], 1.0):
            raise DesignError("every section's leading denominator coefficient must be 1")
        sos.setflags(write=False)
        object.__setattr__(self, "sections", sos)

    @property
    def n_sections(self) -> int:
        return self.sections.shape[0]

    @property
    def total_order(self) -> int:
        return 2 * self.n_sections

    @property
    def pad_length(self) -> int:
        """Odd-reflection padding applied at each end by filtfilt."""
        return 3 * (self.total_order + 1)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(section[3:]) for section in self.sections])

    @property
    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def frequency_response(self, freqs_hz) -> np.ndarray:
        """Complex response of one forward pass at the given frequencies (Hz)."""
        freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
        _, h = signal.sosfreqz(self.sections, worN=freqs, fs=self.design_meta.sample_rate_hz)
        return h

    def to_dict(self) -> dict:
        return {"design_meta": self.design_meta.to_dict(), "sos": self.sections.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "IirFilter":
        meta = data["design_meta"]
        design = FilterDesign(
            kind=FilterKind(meta["kind"]),
            low_hz=float(meta["low_hz"]),
            high_hz=float(meta["high_hz"]),
            order=int(meta["order"]),
            sample_rate_hz=float(meta["sample_rate_hz"]),
        )
        return cls(np.array(data["sos"], dtype=float), design)


def design_butterworth(kind, low_hz: float, high_hz: float, order: int, sample_rate_hz: float) -> IirFilter:
    """
    Digital Butterworth filter from the analog prototype by bilinear transform
    with pre-warped cutoffs.

    For Bandpass, `order` is the prototype order (a 4th-order band-pass has
    four sections). A Bandpass with low_hz == 0 is designed as a Lowpass at
    high_hz; for Lowpass only high_hz is used.
    """
    kind = FilterKind(kind)
    nyquist = sample_rate_hz / 2
    if kind is FilterKind.NOTCH:
        raise DesignError("use design_notch for notch filters")
    if order not in ALLOWED_ORDERS:
        raise DesignError(f"order must be one of {ALLOWED_ORDERS}, got {order}")
    if sample_rate_hz <= 0:
        raise DesignError(f"sample rate must be positive, got {sample_rate_hz}")
    if not 0 <= low_hz < high_hz:
        raise DesignError(f"need 0 <= low_hz < high_hz, got low={low_hz} high={high_hz}")
    if high_hz >= nyquist:
        raise DesignError(f"high cutoff {high_hz} Hz must be below Nyquist ({nyquist} Hz)")

    if kind is FilterKind.BANDPASS and low_hz == 0:
        logger.debug(f"Band-pass with 0 Hz lower edge designed as {high_hz} Hz low-pass")
        kind = FilterKind.LOWPASS

    if kind is FilterKind.LOWPASS:
        sos = signal.butter(order, high_hz, btype="lowpass", fs=sample_rate_hz, output="sos")
        design = FilterDesign(kind, 0.0, float(high_hz), order, float(sample_rate_hz))
    else:
        sos = signal.butter(order, [low_hz, high_hz], btype="bandpass", fs=sample_rate_hz, output="sos")
        design = FilterDesign(kind, float(low_hz), float(high_hz), order, float(sample_rate_hz))

    iir = IirFilter(sos, design)
    if not iir.is_stable:
        raise DesignError(f"designed filter {design} is unstable")
    logger.trace(f"Designed {design} with {iir.n_sections} sections")
    return iir


def design_notch(center_hz: float = DEFAULT_NOTCH_HZ, sample_rate_hz: float = 250.0,
                 quality_factor: float = DEFAULT_NOTCH_Q) -> IirFilter:
    """Second-order IIR notch at center_hz with -3 dB width center_hz / quality_factor."""
    nyquist = sample_rate_hz / 2
    if not 0 < center_hz < nyquist:
        raise DesignError(f"notch center {center_hz} Hz must lie in (0, {nyquist}) Hz")
    if quality_factor <= 0:
        raise DesignError(f"quality factor must be positive, got {quality_factor}")

    b, a = signal.iirnotch(center_hz, quality_factor, fs=sample_rate_hz)
    sos = signal.tf2sos(b, a)
    half_width = center_hz / quality_factor / 2
    design = FilterDesign(FilterKind.NOTCH, center_hz - half_width, center_hz + half_width, 2, float(sample_rate_hz))
    return IirFilter(sos, design)


def filtfilt(iir: IirFilter, x: np.ndarray) -> np.ndarray:
    """
    Zero-phase application along the last axis.

    Odd-reflection padding of `iir.pad_length` samples at both ends, trimmed
    after the backward pass. The effective magnitude response is |H|^2.
    """
    x = np.asarray(x, dtype=float)
    minimum = iir.pad_length + 1
    if x.shape[-1] < minimum:
        raise SignalTooShortError(x.shape[-1], minimum)
    # the sosfilt kernels reject read-only coefficient buffers
    return signal.sosfiltfilt(np.array(iir.sections), x, axis=-1, padtype="odd", padlen=iir.pad_length)


def broadband_filter(sample_rate_hz: float, low_hz: float = BROADBAND_LOW_HZ,
                     high_hz: float = BROADBAND_HIGH_HZ, order: int = FILTER_BANK_ORDER) -> IirFilter:
    return design_butterworth(FilterKind.BANDPASS, low_hz, high_hz, order, sample_rate_hz)


def band_filter(band: BandDefinition, sample_rate_hz: float, order: int = FILTER_BANK_ORDER) -> IirFilter:
    if not band.fits(sample_rate_hz):
        raise DesignError(f"{band.name} band edge {band.high_hz} Hz exceeds Nyquist for {sample_rate_hz} Hz")
    return design_butterworth(FilterKind.BANDPASS, band.low_hz, band.high_hz, order, sample_rate_hz)


def preprocess_recording(rec: Recording, notch_hz: float = DEFAULT_NOTCH_HZ, quality: float = DEFAULT_NOTCH_Q,
                         low_hz: float = BROADBAND_LOW_HZ, high_hz: float = BROADBAND_HIGH_HZ,
                         order: int = FILTER_BANK_ORDER) -> Recording:
    """Notch, then broadband band-pass, on every channel. Returns a new Recording."""
    notch = design_notch(notch_hz, rec.sample_rate_hz, quality)
    broadband = broadband_filter(rec.sample_rate_hz, low_hz, high_hz, order)
    logger.debug(f"Preprocessing {rec.subject_id}: notch {notch_hz} Hz (Q={quality}), band-pass {low_hz}-{high_hz} Hz")
    cleaned = filtfilt(broadband, filtfilt(notch, rec.samples))
    return rec.with_samples(cleaned)


@dataclass(frozen=True)
class FilterBankOutput:
    signals: dict  # BandName -> [n_channels x n_samples]
    filters: dict  # BandName -> IirFilter

    def __getitem__(self, band) -> np.ndarray:
        key = band.name if isinstance(band, BandDefinition) else band
        return self.signals[key]

    def __contains__(self, band) -> bool:
        key = band.name if isinstance(band, BandDefinition) else band
        return key in self.signals

    @property
    def bands(self) -> list[BandName]:
        return list(self.signals)


def apply_filter_bank(signals: np.ndarray, bands: list[BandDefinition], sample_rate_hz: float,
                      order: int = FILTER_BANK_ORDER, threads: int = 1) -> FilterBankOutput:
    """
    Zero-phase band decomposition of a [channels x samples] matrix.

    Each band gets its own 4th-order Butterworth design; the delta band (0 Hz
    lower edge) becomes a low-pass. Output order follows `bands`.
    """
    signals = np.asarray(signals, dtype=float)
    filters = {band.name: band_filter(band, sample_rate_hz, order) for band in bands}

    def run(band: BandDefinition) -> np.ndarray:
        logger.trace(f"Filtering {band.name} ({band.low_hz}-{band.high_hz} Hz)")
        return filtfilt(filters[band.name], signals)

    if threads > 1 and len(bands) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, bands))
    else:
        outputs = [run(band) for band in bands]

    return FilterBankOutput(
        signals={band.name: out for band, out in zip(bands, outputs)},
        filters=filters,
    )

"""Multichannel WAV input/output.

Reads integer 16/24/32-bit PCM and 32-bit float WAV files into float
arrays normalised to [-1, 1); writes 32-bit float (default) or 16-bit
PCM.  Channel q corresponds to microphone q.
"""

import numpy as np
from scipy.io import wavfile


def read_wav(path):
    """Read a WAV file.

    Returns
    -------
    (sample_rate, data) with ``data`` float64 of shape (samples, channels),
    integer formats scaled by their full-scale value.
    """
    fs, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        out = data.astype(np.float64) / 2**15
    elif data.dtype == np.int32:
        # covers 24-bit PCM too: scipy widens it to int32
        out = data.astype(np.float64) / 2**31
    elif data.dtype == np.uint8:
        out = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        out = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return int(fs), out


def write_wav(path, sample_rate, data, dtype="float32"):
    """Write a (samples, channels) float array as WAV."""
    data = np.asarray(data)
    if data.ndim == 1:
        data = data[:, None]
    if dtype == "float32":
        wavfile.write(path, int(sample_rate), data.astype(np.float32))
    elif dtype == "int16":
        clipped = np.clip(data, -1.0, 1.0 - 2**-15)
        wavfile.write(path, int(sample_rate), (clipped * 2**15).astype(np.int16))
    else:
        raise ValueError(f"unsupported output dtype {dtype!r}")

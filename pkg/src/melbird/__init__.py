"""Birdcall classification from mel-spectrogram images.

Raw WAV audio is resampled to 32 kHz, cut into 10 s windows, converted to
dB-scaled mel spectrograms and 224x224 images, then classified by either a
spectrogram transformer or an MBConv baseline, both trained from scratch
with a built-in reverse-mode autodiff core. Heavy convolution kernels run
through an optional compiled extension with a numpy fallback.
"""

__version__ = "0.1.0"

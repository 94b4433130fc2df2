"""Significant wave height forecasting with STL, FFT/STFT features and a TCN-LSTM network."""

__version__ = "0.1.0"

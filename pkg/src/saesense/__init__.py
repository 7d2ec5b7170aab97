"""Stacked-autoencoder spectrum sensing for OFDM signals."""

"""Jam-aware WiFi protocol stack simulator.

Library layout:

- nn: dense network engine (layers, losses, ADAM, gradient checks)
- waveform: synthetic I/Q frame generation and channel models
- frontend: RF front end (quantizer, band filter, denoising autoencoder, PCA)
- classifier: idle/busy/jammed signal classification
- authfp: radiometric fingerprints and outlier-based authentication
- jammer: channel jammer behaviours
- mac: channel access, transmit power control and MCS adaptation
- net: slotted multi-hop network engine with backpressure routing
- cli: command line entry points
"""

__version__ = "0.1.0"

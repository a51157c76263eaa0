"""asckit: low-complexity acoustic scene classification toolkit.

Implements the full desk-scale pipeline: WAV ingestion, three spectrogram
front-ends (log-mel, constant-Q, gammatone) stacked with delta features,
online batch augmentation, an inception-residual network family trained
with a KL + L2 objective, product-rule late fusion, and a synthetic
device-mismatch benchmark generator.
"""

__version__ = "0.1.0"

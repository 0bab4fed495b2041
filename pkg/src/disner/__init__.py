"""Dictionary-augmented BiLSTM-CRF toolkit for disease named entity recognition."""

__version__ = "0.1.0"

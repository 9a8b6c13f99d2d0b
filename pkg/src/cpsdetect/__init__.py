"""Anomaly detection for networked sensor streams.

The pipeline encodes sliding-window segments with a sensor-axis attention
encoder, estimates dynamic sensor-graph edge weights from the embeddings,
compresses each weighted attributed graph with a variational graph
autoencoder, and scores segments by their distance to a learned hypersphere
center over normal data.
"""

__version__ = "0.1.0"

"""torsim: sampled overlay-network models, flow-level simulation, and
repeated-sampling statistical inference.

Pipeline: stage relay snapshots -> generate scaled network configs ->
simulate each with Markov traffic -> estimate quantiles with confidence
intervals across networks.
"""

__version__ = "0.1.0"

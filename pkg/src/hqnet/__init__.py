"""hqnet: hybrid quantum-classical classification on a statevector simulator.

A dense encoder network produces the angles of a simulated variational
circuit; the circuit's measurement probabilities feed a dense decoder, and
the whole pipeline trains end to end with exact gradients crossing the
classical/quantum boundary. The ``runner`` module adds config-file driven,
seed-deterministic experiment orchestration for the MNIST 3-vs-7 benchmark.
"""

__version__ = "0.1.0"

from . import classical_net, hybrid_model, mnist_data, quantum_model, runner, statevector

__all__ = [
    "classical_net",
    "hybrid_model",
    "mnist_data",
    "quantum_model",
    "runner",
    "statevector",
    "__version__",
]

"""Distribution of the maximum of reflected asymmetric walks and the traffic-light queue."""

__version__ = "0.1.0"

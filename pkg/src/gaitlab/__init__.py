"""gaitlab: wrist-worn IMU gait screening, from wire bytes to a tuned KNN."""

__version__ = "0.1.0"

"""Real-time head reenactment engine.

Pipeline: 2D facial landmarks drive a linear 3D face model (pose, identity,
expression, gaze), the tracked identity is swapped for a target person's, and
the result is rendered as normalized-coordinate and gaze conditioning images
that a neural renderer (or a preview display) can consume, frame by frame.
"""

__version__ = "0.1.0"

"""Dense scene flow from stereo disparity and optical flow."""

__version__ = "0.1.0"

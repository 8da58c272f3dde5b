"""Artifact detection and localization toolkit for single-channel sleep EEG."""

__version__ = "0.1.0"

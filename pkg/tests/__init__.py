"""Test package for the oscillator consensus workbench."""

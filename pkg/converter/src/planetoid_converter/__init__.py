"""One-shot converter from the raw citation-benchmark distribution to the
portable text bundle consumed by the experiment library."""

from .convert import ConversionError, RawPlanetoidBundle, convert

__all__ = ["ConversionError", "RawPlanetoidBundle", "convert"]

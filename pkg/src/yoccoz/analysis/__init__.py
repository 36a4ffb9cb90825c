"""Global dilatation fields, tail areas, gauge tests and the approximant experiment."""

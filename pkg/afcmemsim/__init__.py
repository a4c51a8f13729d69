"""
afcmemsim: simulador y herramientas de análisis para memorias cuánticas de
peine atómico de frecuencias (AFC) en microanillos.
"""
__version__ = "1.0.0"

"""Configuration : constantes par défaut et fichiers de topologie."""

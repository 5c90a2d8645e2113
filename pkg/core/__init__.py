"""Noyau : moteur physique différentiable pour robots de tenségrité."""

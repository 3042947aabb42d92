"""Utility helpers: settings, logging and shared exceptions."""

"""Pytest tests for EikoPlan"""

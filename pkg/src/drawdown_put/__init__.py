"""Drawdown-capped perpetual American put: closed-form pricing and verification"""

"""
Crowd Prompt - взаимное обучение сегментатора и регрессора плотности для подсчета толпы.
"""

__version__ = "1.0.0"
__author__ = "Crowd Prompt Team"
__description__ = "Взаимное обучение сегментатора и регрессора плотности для подсчета толпы"

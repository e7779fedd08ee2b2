"""
obstacle_kit: problemas de obstáculo parabólicos com dados de medida, barreiras
irregulares e comutação ótima, com oráculos de Monte Carlo e árvore.
"""
__version__ = '0.1.0'

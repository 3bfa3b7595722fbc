from .writers import read_csv, write_csv, write_vtk

__all__ = ['read_csv', 'write_csv', 'write_vtk']

#pragma once

#include <localdeform/geometry.hpp>

#include <Eigen/Core>

namespace localdeform::shapes {

struct MeshData
{
    Eigen::MatrixXd vertices;
    Eigen::MatrixXi elements;
    MeshKind kind = MeshKind::triangle;
};

/// Rectangle [0,length] x [0,height] split into nx x ny cells, two triangles
/// per cell with alternating diagonals. Vertex (i, j) has index j*(nx+1)+i.
MeshData bar_2d(int nx, int ny, double length, double height);

/// Box [0,length] x [0,height] x [0,depth] split into nx x ny x nz cubes,
/// six tetrahedra per cube (conforming Kuhn split).
/// Vertex (i, j, k) has index (k*(ny+1)+j)*(nx+1)+i.
MeshData bar_3d(int nx, int ny, int nz, double length, double height, double depth);

/// Disk of given radius centred at the origin: the centre vertex plus `rings`
/// concentric rings, ring r holding 6r vertices.
MeshData disk(double radius, int rings);

/// Flat square cloth [0,size]^2 at z = 0 embedded in 3D, n x n cells.
MeshData cloth_grid(int n, double size);

/// Open polyline with `segments` segments along a gentle sine arc in 2D.
MeshData polyline_arc(int segments, double length, double amplitude);

} // namespace localdeform::shapes

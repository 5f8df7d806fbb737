#include <localdeform/shapes.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace localdeform::shapes {

namespace {

Eigen::MatrixXi to_matrix(const std::vector<std::array<int, 4>>& rows, int arity)
{
    Eigen::MatrixXi out(static_cast<Eigen::Index>(rows.size()), arity);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < arity; ++c) out(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<size_t>(c)];
    }
    return out;
}

} // namespace

MeshData bar_2d(int nx, int ny, double length, double height)
{
    MeshData mesh;
    mesh.kind = MeshKind::triangle;
    mesh.vertices.resize((nx + 1) * (ny + 1), 2);
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            mesh.vertices.row(j * (nx + 1) + i) << length * i / nx, height * j / ny;
        }
    }
    std::vector<std::array<int, 4>> tris;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int v00 = j * (nx + 1) + i;
            const int v10 = v00 + 1;
            const int v01 = v00 + nx + 1;
            const int v11 = v01 + 1;
            if ((i + j) % 2 == 0) {
                tris.push_back({v00, v10, v11, 0});
                tris.push_back({v00, v11, v01, 0});
            } else {
                tris.push_back({v00, v10, v01, 0});
                tris.push_back({v10, v11, v01, 0});
            }
        }
    }
    mesh.elements = to_matrix(tris, 3);
    return mesh;
}

MeshData bar_3d(int nx, int ny, int nz, double length, double height, double depth)
{
    MeshData mesh;
    mesh.kind = MeshKind::tet;
    auto index = [&](int i, int j, int k) { return (k * (ny + 1) + j) * (nx + 1) + i; };
    mesh.vertices.resize((nx + 1) * (ny + 1) * (nz + 1), 3);
    for (int k = 0; k <= nz; ++k) {
        for (int j = 0; j <= ny; ++j) {
            for (int i = 0; i <= nx; ++i) {
                mesh.vertices.row(index(i, j, k)) << length * i / nx, height * j / ny, depth * k / nz;
            }
        }
    }
    // Corner c of a cube has offsets (c&1, (c>>1)&1, (c>>2)&1).
    static constexpr std::array<std::array<int, 4>, 6> kuhn = {
        {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}}};
    std::vector<std::array<int, 4>> tets;
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                for (const auto& t : kuhn) {
                    std::array<int, 4> tet{};
                    for (int c = 0; c < 4; ++c) {
                        const int corner = t[static_cast<size_t>(c)];
                        tet[static_cast<size_t>(c)] =
                            index(i + (corner & 1), j + ((corner >> 1) & 1), k + ((corner >> 2) & 1));
                    }
                    tets.push_back(tet);
                }
            }
        }
    }
    mesh.elements = to_matrix(tets, 4);
    return mesh;
}

MeshData disk(double radius, int rings)
{
    MeshData mesh;
    mesh.kind = MeshKind::triangle;
    std::vector<std::vector<int>> ring_ids(static_cast<size_t>(rings + 1));
    std::vector<std::array<double, 2>> points{{0.0, 0.0}};
    ring_ids[0] = {0};
    for (int r = 1; r <= rings; ++r) {
        const int count = 6 * r;
        for (int k = 0; k < count; ++k) {
            const double angle = 2.0 * std::numbers::pi * k / count;
            ring_ids[static_cast<size_t>(r)].push_back(static_cast<int>(points.size()));
            points.push_back({radius * r / rings * std::cos(angle), radius * r / rings * std::sin(angle)});
        }
    }
    std::vector<std::array<int, 4>> tris;
    for (int r = 1; r <= rings; ++r) {
        const auto& inner = ring_ids[static_cast<size_t>(r - 1)];
        const auto& outer = ring_ids[static_cast<size_t>(r)];
        const int a = static_cast<int>(inner.size());
        const int b = static_cast<int>(outer.size());
        if (a == 1) {
            for (int j = 0; j < b; ++j) tris.push_back({inner[0], outer[static_cast<size_t>(j)], outer[static_cast<size_t>((j + 1) % b)], 0});
            continue;
        }
        int i = 0;
        int j = 0;
        while (i < a || j < b) {
            const bool advance_inner = j == b || (i < a && static_cast<double>(i + 1) / a < static_cast<double>(j + 1) / b);
            if (advance_inner) {
                tris.push_back({inner[static_cast<size_t>(i % a)], inner[static_cast<size_t>((i + 1) % a)],
                                outer[static_cast<size_t>(j % b)], 0});
                ++i;
            } else {
                tris.push_back({inner[static_cast<size_t>(i % a)], outer[static_cast<size_t>((j + 1) % b)],
                                outer[static_cast<size_t>(j % b)], 0});
                ++j;
            }
        }
    }
    mesh.vertices.resize(static_cast<Eigen::Index>(points.size()), 2);
    for (size_t p = 0; p < points.size(); ++p) mesh.vertices.row(static_cast<Eigen::Index>(p)) << points[p][0], points[p][1];
    mesh.elements = to_matrix(tris, 3);
    return mesh;
}

MeshData cloth_grid(int n, double size)
{
    MeshData flat = bar_2d(n, n, size, size);
    MeshData mesh;
    mesh.kind = MeshKind::triangle;
    mesh.vertices = Eigen::MatrixXd::Zero(flat.vertices.rows(), 3);
    mesh.vertices.leftCols(2) = flat.vertices;
    mesh.elements = flat.elements;
    return mesh;
}

MeshData polyline_arc(int segments, double length, double amplitude)
{
    MeshData mesh;
    mesh.kind = MeshKind::polyline;
    mesh.vertices.resize(segments + 1, 2);
    for (int i = 0; i <= segments; ++i) {
        const double t = static_cast<double>(i) / segments;
        mesh.vertices.row(i) << length * t, amplitude * std::sin(std::numbers::pi * t);
    }
    mesh.elements.resize(segments, 2);
    for (int i = 0; i < segments; ++i) mesh.elements.row(i) << i, i + 1;
    return mesh;
}

} // namespace localdeform::shapes

#pragma once

#include <localdeform/constraints.hpp>
#include <localdeform/shapes.hpp>
#include <localdeform/solver.hpp>

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace localdeform::io {

inline constexpr int kDocumentVersion = 1;

enum class MeshFormat { obj, off, nodele, polyline_json };

/// Format from the file extension (.obj, .off, .node/.ele, .json).
MeshFormat format_from_path(const std::filesystem::path& path);
std::string format_name(MeshFormat format);
MeshFormat parse_format_name(const std::string& name);

/// Reads a mesh. OBJ/OFF polygons are fan-triangulated; OBJ `l` records give a
/// polyline. OBJ and OFF always yield three coordinate columns.
shapes::MeshData read_mesh(const std::filesystem::path& path);
shapes::MeshData read_mesh(const std::filesystem::path& path, MeshFormat format);

/// Drops the third column when it is identically zero.
shapes::MeshData drop_flat_z(shapes::MeshData mesh);

/// Writes with 17 significant digits. For node/ele, `path` names the .node file
/// and the .ele file is written next to it.
void write_mesh(const std::filesystem::path& path, MeshFormat format, const Eigen::MatrixXd& vertices,
                const Eigen::MatrixXi& elements, MeshKind kind);

/// Path of the displacement table written next to a result mesh.
std::filesystem::path sidecar_path(const std::filesystem::path& mesh_path);

/// CSV with header "vertex,displacement,in_roi", one row per vertex.
void write_displacement_table(const std::filesystem::path& path, const Eigen::VectorXd& magnitudes,
                              double threshold);

struct DisplacementRow
{
    int vertex = 0;
    double displacement = 0.0;
    bool in_roi = false;
};
std::vector<DisplacementRow> read_displacement_table(const std::filesystem::path& path);

/// Deformed mesh in `format` plus the sidecar table when `include_displacement`.
void write_result(const std::filesystem::path& path, MeshFormat format, const DeformResult& result,
                  const RestMesh& mesh, bool include_displacement = true);

// ---------------------------------------------------------------------------
// Session documents

enum class SessionKind { polyline, triangle, tet, cloth };

std::string kind_name(SessionKind kind);
MeshKind mesh_kind(SessionKind kind);

struct SessionDocument
{
    int version = kDocumentVersion;
    SessionKind kind = SessionKind::triangle;
    /// Exactly one of mesh_path / inline_mesh is set.
    std::optional<std::string> mesh_path;
    std::optional<MeshFormat> mesh_format;
    std::optional<shapes::MeshData> inline_mesh;
    SolverParams params;
    ConstraintSet constraints;
};

/// Strict parse: unknown fields, missing w or s, wrong types and bad enum
/// values all throw SchemaError naming the offending JSON path.
SessionDocument parse_session(const nlohmann::json& document);
SessionDocument read_session(const std::filesystem::path& path);
/// Canonical form with every field spelled out.
nlohmann::json session_to_json(const SessionDocument& session);
void write_json(const std::filesystem::path& path, const nlohmann::json& document);

/// Mesh data of a session; relative paths resolve against `base_dir`.
shapes::MeshData load_session_mesh(const SessionDocument& session, const std::filesystem::path& base_dir);
std::shared_ptr<const RestMesh> build_session_mesh(const SessionDocument& session,
                                                   const std::filesystem::path& base_dir);

std::string material_type_name(const MaterialModel& material);
std::string regularizer_name(Regularizer regularizer);
Regularizer parse_regularizer(const std::string& name);

/// Default material for an energy name (arap, acap, nh, cloth, polyline).
MaterialModel default_material(const std::string& energy);

// ---------------------------------------------------------------------------
// Trajectories

struct Keyframe
{
    double time = 0.0;
    std::map<int, Eigen::VectorXd> handles;
};

struct TrajectoryDocument
{
    int version = kDocumentVersion;
    /// Session as a path (relative to the trajectory) or inline document.
    std::optional<std::string> session_path;
    std::optional<SessionDocument> inline_session;
    std::vector<Keyframe> keyframes;
    double frame_rate = 30.0;
    bool reset_rest_each_step = false;
};

TrajectoryDocument parse_trajectory(const nlohmann::json& document);
TrajectoryDocument read_trajectory(const std::filesystem::path& path);
nlohmann::json trajectory_to_json(const TrajectoryDocument& trajectory);

/// Linear interpolation of the keyframe table at time t (clamped to the ends).
std::map<int, Eigen::VectorXd> sample_trajectory(const TrajectoryDocument& trajectory, double t);

// ---------------------------------------------------------------------------
// Reports

nlohmann::json params_to_json(const SolverParams& params);
nlohmann::json residuals_to_json(const IterationResiduals& r);
nlohmann::json solve_report(const DeformResult& result, const SolverParams& params, const RestMesh& mesh);

} // namespace localdeform::io

#include <localdeform/errors.hpp>
#include <localdeform/io.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace localdeform::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Text helpers

std::string format_double(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

[[noreturn]] void parse_error(const fs::path& path, size_t line, const std::string& msg)
{
    fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": " + msg);
}

std::ifstream open_input(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return in;
}

std::ofstream open_output(const fs::path& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    return out;
}

void finish_output(std::ofstream& out, const fs::path& path)
{
    out.flush();
    if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

double parse_double(const std::string& token, const fs::path& path, size_t line)
{
    size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        parse_error(path, line, "expected a number, got '" + token + "'");
    }
    if (used != token.size()) parse_error(path, line, "expected a number, got '" + token + "'");
    if (!std::isfinite(value)) parse_error(path, line, "coordinate is not finite");
    return value;
}

long parse_long(const std::string& token, const fs::path& path, size_t line)
{
    size_t used = 0;
    long value = 0;
    try {
        value = std::stol(token, &used);
    } catch (const std::exception&) {
        parse_error(path, line, "expected an integer, got '" + token + "'");
    }
    if (used != token.size()) parse_error(path, line, "expected an integer, got '" + token + "'");
    return value;
}

std::vector<std::string> split_tokens(const std::string& line)
{
    std::vector<std::string> tokens;
    std::istringstream ss(line);
    std::string token;
    while (ss >> token) tokens.push_back(token);
    return tokens;
}

std::string strip_comment(const std::string& line)
{
    const auto hash = line.find('#');
    return hash == std::string::npos ? line : line.substr(0, hash);
}

Eigen::MatrixXd rows_to_matrix(const std::vector<std::vector<double>>& rows, int cols)
{
    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), cols);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<size_t>(c)];
    }
    return M;
}

Eigen::MatrixXi rows_to_index_matrix(const std::vector<std::vector<int>>& rows, int cols)
{
    Eigen::MatrixXi M(static_cast<Eigen::Index>(rows.size()), cols);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<size_t>(c)];
    }
    return M;
}

void check_element_indices(const Eigen::MatrixXi& elements, Eigen::Index num_vertices, const fs::path& path)
{
    if (elements.size() == 0) return;
    if (elements.minCoeff() < 0 || elements.maxCoeff() >= num_vertices) {
        fail(ErrorCode::IndexOutOfRange, path.string() + ": element references a missing vertex");
    }
}

// ---------------------------------------------------------------------------
// Mesh readers

shapes::MeshData read_obj(const fs::path& path)
{
    std::ifstream in = open_input(path);
    std::vector<std::vector<double>> vertices;
    std::vector<std::vector<int>> faces;
    std::vector<std::vector<int>> segments;
    std::string raw;
    size_t line_no = 0;
    auto resolve = [&](const std::string& token) {
        const std::string head = token.substr(0, token.find('/'));
        const long idx = parse_long(head, path, line_no);
        const long n = static_cast<long>(vertices.size());
        const long resolved = idx < 0 ? n + idx : idx - 1;
        if (idx == 0 || resolved < 0 || resolved >= n) parse_error(path, line_no, "vertex index " + head + " out of range");
        return static_cast<int>(resolved);
    };
    while (std::getline(in, raw)) {
        ++line_no;
        const std::vector<std::string> t = split_tokens(strip_comment(raw));
        if (t.empty()) continue;
        const std::string& tag = t[0];
        if (tag == "v") {
            if (t.size() < 4) parse_error(path, line_no, "vertex needs three coordinates");
            // An optional fourth (w) or colour values follow; only xyz is kept.
            vertices.push_back({parse_double(t[1], path, line_no), parse_double(t[2], path, line_no),
                                parse_double(t[3], path, line_no)});
        } else if (tag == "f") {
            if (t.size() < 4) parse_error(path, line_no, "face needs at least three vertices");
            std::vector<int> ids;
            for (size_t k = 1; k < t.size(); ++k) ids.push_back(resolve(t[k]));
            for (size_t k = 1; k + 1 < ids.size(); ++k) faces.push_back({ids[0], ids[k], ids[k + 1]});
        } else if (tag == "l") {
            if (t.size() < 3) parse_error(path, line_no, "line needs at least two vertices");
            std::vector<int> ids;
            for (size_t k = 1; k < t.size(); ++k) ids.push_back(resolve(t[k]));
            for (size_t k = 0; k + 1 < ids.size(); ++k) segments.push_back({ids[k], ids[k + 1]});
        } else if (tag == "vt" || tag == "vn" || tag == "o" || tag == "g" || tag == "s" || tag == "usemtl" ||
                   tag == "mtllib") {
            continue;
        } else if (tag == "vp" || tag == "cstype" || tag == "curv" || tag == "curv2" || tag == "surf" ||
                   tag == "deg" || tag == "p") {
            fail(ErrorCode::UnsupportedFeature, path.string() + ":" + std::to_string(line_no) + ": '" + tag +
                                                    "' records are not supported");
        } else {
            parse_error(path, line_no, "unknown record '" + tag + "'");
        }
    }
    if (!faces.empty() && !segments.empty()) {
        fail(ErrorCode::UnsupportedFeature, path.string() + ": mixed faces and lines");
    }
    shapes::MeshData mesh;
    mesh.vertices = rows_to_matrix(vertices, 3);
    if (!segments.empty()) {
        mesh.kind = MeshKind::polyline;
        mesh.elements = rows_to_index_matrix(segments, 2);
    } else {
        mesh.kind = MeshKind::triangle;
        mesh.elements = rows_to_index_matrix(faces, 3);
    }
    return mesh;
}

// Tokenizer over a whole file that skips comments and tracks line numbers.
class TokenStream
{
public:
    explicit TokenStream(const fs::path& path) : m_path(path), m_in(open_input(path)) {}

    bool next(std::string& token)
    {
        while (m_pos >= m_tokens.size()) {
            std::string raw;
            if (!std::getline(m_in, raw)) return false;
            ++m_line;
            m_tokens = split_tokens(strip_comment(raw));
            m_pos = 0;
        }
        token = m_tokens[m_pos++];
        return true;
    }

    std::string require(const char* what)
    {
        std::string token;
        if (!next(token)) parse_error(m_path, m_line, std::string("unexpected end of file, expected ") + what);
        return token;
    }

    double number() { return parse_double(require("a number"), m_path, m_line); }
    long integer() { return parse_long(require("an integer"), m_path, m_line); }

    /// Remaining tokens on the current line.
    std::vector<std::string> rest_of_line()
    {
        std::vector<std::string> rest(m_tokens.begin() + static_cast<std::ptrdiff_t>(m_pos), m_tokens.end());
        m_pos = m_tokens.size();
        return rest;
    }

    size_t line() const { return m_line; }
    const fs::path& path() const { return m_path; }

private:
    fs::path m_path;
    std::ifstream m_in;
    std::vector<std::string> m_tokens;
    size_t m_pos = 0;
    size_t m_line = 0;
};

shapes::MeshData read_off(const fs::path& path)
{
    TokenStream ts(path);
    const std::string header = ts.require("OFF header");
    if (header != "OFF") {
        if (header.find("OFF") != std::string::npos) {
            fail(ErrorCode::UnsupportedFeature, path.string() + ": variant header '" + header + "' is not supported");
        }
        parse_error(path, ts.line(), "missing OFF header");
    }
    const long nv = ts.integer();
    const long nf = ts.integer();
    ts.integer();
    if (nv < 0 || nf < 0) parse_error(path, ts.line(), "negative element count");
    shapes::MeshData mesh;
    mesh.kind = MeshKind::triangle;
    mesh.vertices.resize(nv, 3);
    for (long i = 0; i < nv; ++i) {
        for (int c = 0; c < 3; ++c) mesh.vertices(i, c) = ts.number();
        ts.rest_of_line();
    }
    std::vector<std::vector<int>> faces;
    for (long f = 0; f < nf; ++f) {
        const long k = ts.integer();
        if (k < 3) parse_error(path, ts.line(), "face needs at least three vertices");
        std::vector<int> ids;
        for (long a = 0; a < k; ++a) {
            const long idx = ts.integer();
            if (idx < 0 || idx >= nv) parse_error(path, ts.line(), "vertex index out of range");
            ids.push_back(static_cast<int>(idx));
        }
        ts.rest_of_line(); // optional colour
        for (size_t a = 1; a + 1 < ids.size(); ++a) faces.push_back({ids[0], ids[a], ids[a + 1]});
    }
    mesh.elements = rows_to_index_matrix(faces, 3);
    return mesh;
}

shapes::MeshData read_nodele(const fs::path& path)
{
    fs::path node = path;
    node.replace_extension(".node");
    fs::path ele = path;
    ele.replace_extension(".ele");

    TokenStream ns(node);
    const long nv = ns.integer();
    const long dim = ns.integer();
    const long nattr = ns.integer();
    const long nmarker = ns.integer();
    if (dim != 3) fail(ErrorCode::UnsupportedFeature, node.string() + ": only 3D node files are supported");
    if (nv < 0 || nattr < 0 || nmarker < 0 || nmarker > 1) parse_error(node, ns.line(), "bad node header");
    shapes::MeshData mesh;
    mesh.kind = MeshKind::tet;
    mesh.vertices.resize(nv, 3);
    long first = 0;
    for (long i = 0; i < nv; ++i) {
        const long id = ns.integer();
        if (i == 0) {
            if (id != 0 && id != 1) parse_error(node, ns.line(), "first node index must be 0 or 1");
            first = id;
        }
        if (id != first + i) parse_error(node, ns.line(), "node indices must be consecutive");
        for (int c = 0; c < 3; ++c) mesh.vertices(i, c) = ns.number();
        for (long a = 0; a < nattr + nmarker; ++a) ns.number();
    }

    TokenStream es(ele);
    const long nt = es.integer();
    const long per = es.integer();
    const long eattr = es.integer();
    if (per == 10) fail(ErrorCode::UnsupportedFeature, ele.string() + ": quadratic tetrahedra are not supported");
    if (per != 4 || nt < 0 || eattr < 0) parse_error(ele, es.line(), "bad ele header");
    mesh.elements.resize(nt, 4);
    for (long t = 0; t < nt; ++t) {
        es.integer();
        for (int c = 0; c < 4; ++c) {
            const long idx = es.integer() - first;
            if (idx < 0 || idx >= nv) parse_error(ele, es.line(), "node index out of range");
            mesh.elements(t, c) = static_cast<int>(idx);
        }
        for (long a = 0; a < eattr; ++a) es.number();
    }
    return mesh;
}

json parse_json_file(const fs::path& path)
{
    std::ifstream in = open_input(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Strict JSON access

std::string join(const std::string& base, const std::string& key)
{
    return base + "/" + key;
}

[[noreturn]] void schema_error(const std::string& where, const std::string& msg)
{
    fail(ErrorCode::SchemaError, (where.empty() ? std::string("/") : where) + ": " + msg);
}

const json& require_object(const json& j, const std::string& where)
{
    if (!j.is_object()) schema_error(where, "expected an object");
    return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    for (const auto& [key, value] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) schema_error(join(where, key), "unknown field");
    }
}

const json* find(const json& j, const char* key)
{
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

const json& require(const json& j, const char* key, const std::string& where)
{
    const json* v = find(j, key);
    if (!v) schema_error(join(where, key), "required field is missing");
    return *v;
}

double as_number(const json& j, const std::string& where)
{
    if (!j.is_number()) schema_error(where, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) schema_error(where, "number is not finite");
    return v;
}

long long as_integer(const json& j, const std::string& where)
{
    if (!j.is_number_integer()) schema_error(where, "expected an integer");
    return j.get<long long>();
}

int as_int(const json& j, const std::string& where)
{
    const long long v = as_integer(j, where);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) schema_error(where, "integer out of range");
    return static_cast<int>(v);
}

std::string as_string(const json& j, const std::string& where)
{
    if (!j.is_string()) schema_error(where, "expected a string");
    return j.get<std::string>();
}

bool as_bool(const json& j, const std::string& where)
{
    if (!j.is_boolean()) schema_error(where, "expected a boolean");
    return j.get<bool>();
}

Eigen::VectorXd as_vector(const json& j, const std::string& where)
{
    if (!j.is_array()) schema_error(where, "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = as_number(j[k], join(where, std::to_string(k)));
    return v;
}

Eigen::MatrixXd as_matrix(const json& j, const std::string& where)
{
    if (!j.is_array() || j.empty()) schema_error(where, "expected a nonempty array of rows");
    Eigen::MatrixXd M;
    for (size_t r = 0; r < j.size(); ++r) {
        const Eigen::VectorXd row = as_vector(j[r], join(where, std::to_string(r)));
        if (r == 0) M.resize(static_cast<Eigen::Index>(j.size()), row.size());
        if (row.size() != M.cols()) schema_error(join(where, std::to_string(r)), "rows differ in length");
        M.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return M;
}

Eigen::MatrixXi as_index_matrix(const json& j, const std::string& where)
{
    if (!j.is_array()) schema_error(where, "expected an array of index rows");
    Eigen::MatrixXi M;
    for (size_t r = 0; r < j.size(); ++r) {
        const json& row = j[r];
        const std::string rw = join(where, std::to_string(r));
        if (!row.is_array()) schema_error(rw, "expected an array of integers");
        if (r == 0) M.resize(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(row.size()));
        if (static_cast<Eigen::Index>(row.size()) != M.cols()) schema_error(rw, "rows differ in length");
        for (size_t c = 0; c < row.size(); ++c) {
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_int(row[c], join(rw, std::to_string(c)));
        }
    }
    return M;
}

std::vector<int> as_index_list(const json& j, const std::string& where)
{
    if (!j.is_array()) schema_error(where, "expected an array of integers");
    std::vector<int> out;
    for (size_t k = 0; k < j.size(); ++k) out.push_back(as_int(j[k], join(where, std::to_string(k))));
    return out;
}

double positive(double v, const std::string& where)
{
    if (!(v > 0.0)) schema_error(where, "must be positive");
    return v;
}

double nonnegative(double v, const std::string& where)
{
    if (!(v >= 0.0)) schema_error(where, "must be nonnegative");
    return v;
}

int at_least(int v, int lo, const std::string& where)
{
    if (v < lo) schema_error(where, "must be >= " + std::to_string(lo));
    return v;
}

json vector_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

json matrix_json(const Eigen::MatrixXd& M)
{
    json a = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) a.push_back(vector_json(M.row(r).transpose()));
    return a;
}

json index_matrix_json(const Eigen::MatrixXi& M)
{
    json a = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        a.push_back(row);
    }
    return a;
}

shapes::MeshData read_polyline_json(const fs::path& path)
{
    const json doc = parse_json_file(path);
    require_object(doc, "");
    check_keys(doc, {"vertices", "segments", "closed"}, "");
    shapes::MeshData mesh;
    mesh.kind = MeshKind::polyline;
    mesh.vertices = as_matrix(require(doc, "vertices", ""), "/vertices");
    if (mesh.vertices.cols() < 2 || mesh.vertices.cols() > 3) schema_error("/vertices", "points must have 2 or 3 coordinates");
    const json* segments = find(doc, "segments");
    const json* closed = find(doc, "closed");
    if (segments && closed) schema_error("/closed", "give either segments or closed, not both");
    if (segments) {
        mesh.elements = as_index_matrix(*segments, "/segments");
        if (mesh.elements.rows() > 0 && mesh.elements.cols() != 2) schema_error("/segments", "segments have two indices");
        if (mesh.elements.rows() == 0) mesh.elements.resize(0, 2);
    } else {
        const bool is_closed = closed ? as_bool(*closed, "/closed") : false;
        const Eigen::Index n = mesh.vertices.rows();
        const Eigen::Index count = n < 2 ? 0 : (is_closed ? n : n - 1);
        mesh.elements.resize(count, 2);
        for (Eigen::Index k = 0; k < count; ++k) {
            mesh.elements(k, 0) = static_cast<int>(k);
            mesh.elements(k, 1) = static_cast<int>((k + 1) % n);
        }
    }
    check_element_indices(mesh.elements, mesh.vertices.rows(), path);
    return mesh;
}

// ---------------------------------------------------------------------------
// Mesh writers

void write_obj(const fs::path& path, const Eigen::MatrixXd& V, const Eigen::MatrixXi& E, MeshKind kind)
{
    std::ofstream out = open_output(path);
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        out << "v";
        for (Eigen::Index c = 0; c < 3; ++c) out << ' ' << format_double(c < V.cols() ? V(i, c) : 0.0);
        out << '\n';
    }
    const char* tag = kind == MeshKind::polyline ? "l" : "f";
    for (Eigen::Index j = 0; j < E.rows(); ++j) {
        out << tag;
        for (Eigen::Index c = 0; c < E.cols(); ++c) out << ' ' << E(j, c) + 1;
        out << '\n';
    }
    finish_output(out, path);
}

void write_off(const fs::path& path, const Eigen::MatrixXd& V, const Eigen::MatrixXi& E)
{
    std::ofstream out = open_output(path);
    out << "OFF\n" << V.rows() << ' ' << E.rows() << " 0\n";
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        for (Eigen::Index c = 0; c < 3; ++c) out << (c ? " " : "") << format_double(c < V.cols() ? V(i, c) : 0.0);
        out << '\n';
    }
    for (Eigen::Index j = 0; j < E.rows(); ++j) {
        out << E.cols();
        for (Eigen::Index c = 0; c < E.cols(); ++c) out << ' ' << E(j, c);
        out << '\n';
    }
    finish_output(out, path);
}

void write_nodele(const fs::path& path, const Eigen::MatrixXd& V, const Eigen::MatrixXi& E)
{
    fs::path node = path;
    node.replace_extension(".node");
    fs::path ele = path;
    ele.replace_extension(".ele");
    std::ofstream out = open_output(node);
    out << V.rows() << " 3 0 0\n";
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        out << i;
        for (Eigen::Index c = 0; c < 3; ++c) out << ' ' << format_double(V(i, c));
        out << '\n';
    }
    finish_output(out, node);
    std::ofstream eout = open_output(ele);
    eout << E.rows() << " 4 0\n";
    for (Eigen::Index j = 0; j < E.rows(); ++j) {
        eout << j;
        for (Eigen::Index c = 0; c < 4; ++c) eout << ' ' << E(j, c);
        eout << '\n';
    }
    finish_output(eout, ele);
}

void write_polyline_json(const fs::path& path, const Eigen::MatrixXd& V, const Eigen::MatrixXi& E)
{
    // Hand-written so floats keep 17 significant digits.
    std::ofstream out = open_output(path);
    out << "{\n  \"vertices\": [";
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        out << (i ? ",\n    [" : "\n    [");
        for (Eigen::Index c = 0; c < V.cols(); ++c) out << (c ? ", " : "") << format_double(V(i, c));
        out << ']';
    }
    out << "\n  ],\n  \"segments\": [";
    for (Eigen::Index j = 0; j < E.rows(); ++j) out << (j ? ", [" : "[") << E(j, 0) << ", " << E(j, 1) << ']';
    out << "]\n}\n";
    finish_output(out, path);
}

// ---------------------------------------------------------------------------
// Documents

json material_to_json(const MaterialModel& material)
{
    json j;
    j["type"] = material_type_name(material);
    if (const auto* acap = std::get_if<Acap>(&material)) {
        j["scale_min"] = acap->scale_min;
        j["scale_max"] = acap->scale_max;
    } else if (const auto* nh = std::get_if<NeoHookean>(&material)) {
        j["mu"] = nh->mu;
        j["lambda"] = nh->lambda;
    } else if (const auto* cloth = std::get_if<ClothArap>(&material)) {
        j["bending_stiffness"] = cloth->bending_stiffness;
        j["strain_limit"] = cloth->strain_limit;
        j["strain_stiffness"] = cloth->strain_stiffness;
    }
    return j;
}

MaterialModel parse_material(const json& j, const std::string& where)
{
    require_object(j, where);
    const std::string type = as_string(require(j, "type", where), join(where, "type"));
    auto num = [&](const char* key, double fallback) {
        const json* v = find(j, key);
        return v ? as_number(*v, join(where, key)) : fallback;
    };
    if (type == "arap" || type == "polyline") {
        check_keys(j, {"type"}, where);
        return type == "arap" ? MaterialModel(Arap{}) : MaterialModel(PolylineArap{});
    }
    if (type == "acap") {
        check_keys(j, {"type", "scale_min", "scale_max"}, where);
        Acap acap;
        acap.scale_min = positive(num("scale_min", acap.scale_min), join(where, "scale_min"));
        acap.scale_max = positive(num("scale_max", acap.scale_max), join(where, "scale_max"));
        if (acap.scale_min > acap.scale_max) schema_error(join(where, "scale_max"), "must be >= scale_min");
        return acap;
    }
    if (type == "nh") {
        check_keys(j, {"type", "mu", "lambda"}, where);
        NeoHookean nh;
        nh.mu = positive(num("mu", nh.mu), join(where, "mu"));
        nh.lambda = nonnegative(num("lambda", nh.lambda), join(where, "lambda"));
        return nh;
    }
    if (type == "cloth") {
        check_keys(j, {"type", "bending_stiffness", "strain_limit", "strain_stiffness"}, where);
        ClothArap cloth;
        cloth.bending_stiffness = nonnegative(num("bending_stiffness", cloth.bending_stiffness), join(where, "bending_stiffness"));
        cloth.strain_limit = nonnegative(num("strain_limit", cloth.strain_limit), join(where, "strain_limit"));
        cloth.strain_stiffness = nonnegative(num("strain_stiffness", cloth.strain_stiffness), join(where, "strain_stiffness"));
        return cloth;
    }
    schema_error(join(where, "type"), "unknown material '" + type + "'");
}

SessionKind parse_kind(const std::string& name, const std::string& where)
{
    if (name == "polyline") return SessionKind::polyline;
    if (name == "triangle") return SessionKind::triangle;
    if (name == "tet") return SessionKind::tet;
    if (name == "cloth") return SessionKind::cloth;
    schema_error(where, "unknown kind '" + name + "'");
}

MaterialModel default_material_for(SessionKind kind)
{
    switch (kind) {
    case SessionKind::polyline: return PolylineArap{};
    case SessionKind::cloth: return ClothArap{};
    default: return Arap{};
    }
}

std::map<int, Eigen::VectorXd> parse_handles(const json& j, const std::string& where)
{
    if (!j.is_array()) schema_error(where, "expected an array of handles");
    std::map<int, Eigen::VectorXd> handles;
    for (size_t k = 0; k < j.size(); ++k) {
        const std::string w = join(where, std::to_string(k));
        require_object(j[k], w);
        check_keys(j[k], {"vertex", "target"}, w);
        const int v = as_int(require(j[k], "vertex", w), join(w, "vertex"));
        if (v < 0) schema_error(join(w, "vertex"), "must be nonnegative");
        if (handles.count(v)) schema_error(join(w, "vertex"), "duplicate handle");
        handles[v] = as_vector(require(j[k], "target", w), join(w, "target"));
    }
    return handles;
}

json handles_to_json(const std::map<int, Eigen::VectorXd>& handles)
{
    json a = json::array();
    for (const auto& [v, target] : handles) a.push_back({{"vertex", v}, {"target", vector_json(target)}});
    return a;
}

ConstraintSet parse_constraints(const json& j, const std::string& where)
{
    require_object(j, where);
    check_keys(j, {"handles", "groups"}, where);
    ConstraintSet cs;
    if (const json* h = find(j, "handles")) cs.handles = parse_handles(*h, join(where, "handles"));
    if (const json* g = find(j, "groups")) {
        const std::string gw = join(where, "groups");
        if (!g->is_array()) schema_error(gw, "expected an array of groups");
        for (size_t k = 0; k < g->size(); ++k) {
            const std::string w = join(gw, std::to_string(k));
            const json& item = (*g)[k];
            require_object(item, w);
            check_keys(item, {"vertices", "A", "b"}, w);
            AffineGroup group;
            group.vertices = as_index_list(require(item, "vertices", w), join(w, "vertices"));
            if (const json* A = find(item, "A")) group.A = as_matrix(*A, join(w, "A"));
            if (const json* b = find(item, "b")) {
                if (!group.A) schema_error(join(w, "b"), "b requires A");
                group.b = as_vector(*b, join(w, "b"));
            }
            cs.groups.push_back(std::move(group));
        }
    }
    return cs;
}

json constraints_to_json(const ConstraintSet& cs)
{
    json groups = json::array();
    for (const AffineGroup& g : cs.groups) {
        json item;
        item["vertices"] = g.vertices;
        if (g.A) item["A"] = matrix_json(*g.A);
        if (g.b) item["b"] = vector_json(*g.b);
        groups.push_back(item);
    }
    return {{"handles", handles_to_json(cs.handles)}, {"groups", groups}};
}

void check_version(const json& doc)
{
    const int version = as_int(require(doc, "version", ""), "/version");
    if (version != kDocumentVersion) schema_error("/version", "unsupported version " + std::to_string(version));
}

SessionDocument parse_session_at(const json& doc, const std::string& root)
{
    require_object(doc, root);
    check_keys(doc, {"version", "kind", "mesh", "material", "locality", "solver", "constraints"}, root);
    SessionDocument s;
    {
        const int version = as_int(require(doc, "version", root), join(root, "version"));
        if (version != kDocumentVersion) schema_error(join(root, "version"), "unsupported version " + std::to_string(version));
        s.version = version;
    }
    s.kind = parse_kind(as_string(require(doc, "kind", root), join(root, "kind")), join(root, "kind"));

    const std::string mw = join(root, "mesh");
    const json& mesh = require_object(require(doc, "mesh", root), mw);
    if (find(mesh, "path")) {
        check_keys(mesh, {"path", "format"}, mw);
        s.mesh_path = as_string(*find(mesh, "path"), join(mw, "path"));
        if (const json* f = find(mesh, "format")) {
            try {
                s.mesh_format = parse_format_name(as_string(*f, join(mw, "format")));
            } catch (const Error&) {
                schema_error(join(mw, "format"), "unknown mesh format");
            }
        }
    } else {
        check_keys(mesh, {"vertices", "elements"}, mw);
        shapes::MeshData data;
        data.kind = mesh_kind(s.kind);
        data.vertices = as_matrix(require(mesh, "vertices", mw), join(mw, "vertices"));
        data.elements = as_index_matrix(require(mesh, "elements", mw), join(mw, "elements"));
        s.inline_mesh = std::move(data);
    }

    s.params.material = find(doc, "material") ? parse_material(*find(doc, "material"), join(root, "material"))
                                              : default_material_for(s.kind);

    const std::string lw = join(root, "locality");
    const json& loc = require_object(require(doc, "locality", root), lw);
    check_keys(loc, {"w", "s", "regularizer"}, lw);
    s.params.locality.w = nonnegative(as_number(require(loc, "w", lw), join(lw, "w")), join(lw, "w"));
    s.params.locality.s = positive(as_number(require(loc, "s", lw), join(lw, "s")), join(lw, "s"));
    if (const json* r = find(loc, "regularizer")) {
        const std::string name = as_string(*r, join(lw, "regularizer"));
        try {
            s.params.locality.regularizer = parse_regularizer(name);
        } catch (const Error&) {
            schema_error(join(lw, "regularizer"), "unknown regularizer '" + name + "'");
        }
    }

    if (const json* solver = find(doc, "solver")) {
        const std::string sw = join(root, "solver");
        require_object(*solver, sw);
        check_keys(*solver, {"rho", "gamma", "max_iters", "tol_primal", "tol_dual", "iters_per_frame", "threads"}, sw);
        SolverParams& p = s.params;
        if (const json* v = find(*solver, "rho"); v && !v->is_null()) p.rho = positive(as_number(*v, join(sw, "rho")), join(sw, "rho"));
        if (const json* v = find(*solver, "gamma"); v && !v->is_null()) p.gamma = positive(as_number(*v, join(sw, "gamma")), join(sw, "gamma"));
        if (const json* v = find(*solver, "max_iters")) p.max_iters = at_least(as_int(*v, join(sw, "max_iters")), 1, join(sw, "max_iters"));
        if (const json* v = find(*solver, "tol_primal")) p.tol_primal = nonnegative(as_number(*v, join(sw, "tol_primal")), join(sw, "tol_primal"));
        if (const json* v = find(*solver, "tol_dual")) p.tol_dual = nonnegative(as_number(*v, join(sw, "tol_dual")), join(sw, "tol_dual"));
        if (const json* v = find(*solver, "iters_per_frame")) p.iters_per_frame = at_least(as_int(*v, join(sw, "iters_per_frame")), 1, join(sw, "iters_per_frame"));
        if (const json* v = find(*solver, "threads")) p.threads = at_least(as_int(*v, join(sw, "threads")), 1, join(sw, "threads"));
    }

    if (const json* c = find(doc, "constraints")) s.constraints = parse_constraints(*c, join(root, "constraints"));
    return s;
}

std::vector<Keyframe> parse_keyframes(const json& j, const std::string& where)
{
    if (!j.is_array() || j.empty()) schema_error(where, "expected a nonempty array of keyframes");
    std::vector<Keyframe> frames;
    for (size_t k = 0; k < j.size(); ++k) {
        const std::string w = join(where, std::to_string(k));
        require_object(j[k], w);
        check_keys(j[k], {"time", "handles"}, w);
        Keyframe f;
        f.time = as_number(require(j[k], "time", w), join(w, "time"));
        f.handles = parse_handles(require(j[k], "handles", w), join(w, "handles"));
        if (!frames.empty()) {
            if (!(f.time > frames.back().time)) schema_error(join(w, "time"), "keyframe times must increase strictly");
            const bool same = f.handles.size() == frames.front().handles.size() &&
                              std::equal(f.handles.begin(), f.handles.end(), frames.front().handles.begin(),
                                         [](const auto& a, const auto& b) { return a.first == b.first; });
            if (!same) schema_error(join(w, "handles"), "every keyframe must list the same handle vertices");
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

} // namespace

// ---------------------------------------------------------------------------
// Public mesh API

MeshFormat format_from_path(const fs::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".obj") return MeshFormat::obj;
    if (ext == ".off") return MeshFormat::off;
    if (ext == ".node" || ext == ".ele") return MeshFormat::nodele;
    if (ext == ".json") return MeshFormat::polyline_json;
    fail(ErrorCode::UnsupportedFeature, "unknown mesh extension '" + ext + "'");
}

std::string format_name(MeshFormat format)
{
    switch (format) {
    case MeshFormat::obj: return "obj";
    case MeshFormat::off: return "off";
    case MeshFormat::nodele: return "nodele";
    case MeshFormat::polyline_json: return "polyline-json";
    }
    return "obj";
}

MeshFormat parse_format_name(const std::string& name)
{
    if (name == "obj") return MeshFormat::obj;
    if (name == "off") return MeshFormat::off;
    if (name == "nodele") return MeshFormat::nodele;
    if (name == "polyline-json") return MeshFormat::polyline_json;
    fail(ErrorCode::InvalidArgument, "unknown mesh format '" + name + "'");
}

shapes::MeshData read_mesh(const fs::path& path)
{
    return read_mesh(path, format_from_path(path));
}

shapes::MeshData read_mesh(const fs::path& path, MeshFormat format)
{
    shapes::MeshData mesh;
    switch (format) {
    case MeshFormat::obj: mesh = read_obj(path); break;
    case MeshFormat::off: mesh = read_off(path); break;
    case MeshFormat::nodele: mesh = read_nodele(path); break;
    case MeshFormat::polyline_json: mesh = read_polyline_json(path); break;
    }
    check_element_indices(mesh.elements, mesh.vertices.rows(), path);
    return mesh;
}

shapes::MeshData drop_flat_z(shapes::MeshData mesh)
{
    if (mesh.vertices.cols() == 3 && (mesh.vertices.rows() == 0 || mesh.vertices.col(2).cwiseAbs().maxCoeff() == 0.0)) {
        mesh.vertices = Eigen::MatrixXd(mesh.vertices.leftCols(2));
    }
    return mesh;
}

void write_mesh(const fs::path& path, MeshFormat format, const Eigen::MatrixXd& vertices,
                const Eigen::MatrixXi& elements, MeshKind kind)
{
    switch (format) {
    case MeshFormat::obj: write_obj(path, vertices, elements, kind); return;
    case MeshFormat::off:
        if (kind != MeshKind::triangle) fail(ErrorCode::UnsupportedFeature, "OFF output needs a triangle mesh");
        write_off(path, vertices, elements);
        return;
    case MeshFormat::nodele:
        if (kind != MeshKind::tet) fail(ErrorCode::UnsupportedFeature, "node/ele output needs a tet mesh");
        write_nodele(path, vertices, elements);
        return;
    case MeshFormat::polyline_json:
        if (kind != MeshKind::polyline) fail(ErrorCode::UnsupportedFeature, "polyline-json output needs a polyline");
        write_polyline_json(path, vertices, elements);
        return;
    }
}

fs::path sidecar_path(const fs::path& mesh_path)
{
    fs::path p = mesh_path;
    p.replace_extension();
    p += ".displacement.csv";
    return p;
}

void write_displacement_table(const fs::path& path, const Eigen::VectorXd& magnitudes, double threshold)
{
    std::ofstream out = open_output(path);
    out << "vertex,displacement,in_roi\n";
    for (Eigen::Index i = 0; i < magnitudes.size(); ++i) {
        out << i << ',' << format_double(magnitudes[i]) << ',' << (magnitudes[i] > threshold ? 1 : 0) << '\n';
    }
    finish_output(out, path);
}

std::vector<DisplacementRow> read_displacement_table(const fs::path& path)
{
    std::ifstream in = open_input(path);
    std::string line;
    size_t line_no = 1;
    if (!std::getline(in, line) || line != "vertex,displacement,in_roi") parse_error(path, 1, "bad header");
    std::vector<DisplacementRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 3) parse_error(path, line_no, "expected three columns");
        DisplacementRow row;
        row.vertex = static_cast<int>(parse_long(cells[0], path, line_no));
        row.displacement = parse_double(cells[1], path, line_no);
        const long flag = parse_long(cells[2], path, line_no);
        if (flag != 0 && flag != 1) parse_error(path, line_no, "in_roi must be 0 or 1");
        row.in_roi = flag == 1;
        rows.push_back(row);
    }
    return rows;
}

void write_result(const fs::path& path, MeshFormat format, const DeformResult& result, const RestMesh& mesh,
                  bool include_displacement)
{
    write_mesh(path, format, result.V, mesh.elements(), mesh.kind());
    if (include_displacement) write_displacement_table(sidecar_path(path), result.stats.magnitudes, result.roi_threshold);
}

// ---------------------------------------------------------------------------
// Public document API

std::string kind_name(SessionKind kind)
{
    switch (kind) {
    case SessionKind::polyline: return "polyline";
    case SessionKind::triangle: return "triangle";
    case SessionKind::tet: return "tet";
    case SessionKind::cloth: return "cloth";
    }
    return "triangle";
}

MeshKind mesh_kind(SessionKind kind)
{
    switch (kind) {
    case SessionKind::polyline: return MeshKind::polyline;
    case SessionKind::tet: return MeshKind::tet;
    default: return MeshKind::triangle;
    }
}

std::string material_type_name(const MaterialModel& material)
{
    return std::visit(
        [](const auto& m) -> std::string {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Arap>) return "arap";
            else if constexpr (std::is_same_v<T, Acap>) return "acap";
            else if constexpr (std::is_same_v<T, NeoHookean>) return "nh";
            else if constexpr (std::is_same_v<T, ClothArap>) return "cloth";
            else return "polyline";
        },
        material);
}

std::string regularizer_name(Regularizer regularizer)
{
    switch (regularizer) {
    case Regularizer::scl1: return "scl1";
    case Regularizer::l21: return "l21";
    case Regularizer::none: return "none";
    }
    return "scl1";
}

Regularizer parse_regularizer(const std::string& name)
{
    if (name == "scl1") return Regularizer::scl1;
    if (name == "l21") return Regularizer::l21;
    if (name == "none") return Regularizer::none;
    fail(ErrorCode::InvalidArgument, "unknown regularizer '" + name + "'");
}

MaterialModel default_material(const std::string& energy)
{
    if (energy == "arap") return Arap{};
    if (energy == "acap") return Acap{};
    if (energy == "nh") return NeoHookean{};
    if (energy == "cloth") return ClothArap{};
    if (energy == "polyline") return PolylineArap{};
    fail(ErrorCode::InvalidArgument, "unknown energy '" + energy + "'");
}

SessionDocument parse_session(const json& document)
{
    return parse_session_at(document, "");
}

SessionDocument read_session(const fs::path& path)
{
    return parse_session(parse_json_file(path));
}

json session_to_json(const SessionDocument& s)
{
    json doc;
    doc["version"] = s.version;
    doc["kind"] = kind_name(s.kind);
    if (s.inline_mesh) {
        doc["mesh"] = {{"vertices", matrix_json(s.inline_mesh->vertices)},
                       {"elements", index_matrix_json(s.inline_mesh->elements)}};
    } else {
        json mesh = {{"path", s.mesh_path.value_or("")}};
        if (s.mesh_format) mesh["format"] = format_name(*s.mesh_format);
        doc["mesh"] = mesh;
    }
    doc["material"] = material_to_json(s.params.material);
    doc["locality"] = {{"w", s.params.locality.w},
                       {"s", s.params.locality.s},
                       {"regularizer", regularizer_name(s.params.locality.regularizer)}};
    json solver = {{"max_iters", s.params.max_iters},          {"tol_primal", s.params.tol_primal},
                   {"tol_dual", s.params.tol_dual},            {"iters_per_frame", s.params.iters_per_frame},
                   {"threads", s.params.threads}};
    if (s.params.rho) solver["rho"] = *s.params.rho;
    if (s.params.gamma) solver["gamma"] = *s.params.gamma;
    doc["solver"] = solver;
    doc["constraints"] = constraints_to_json(s.constraints);
    return doc;
}

void write_json(const fs::path& path, const json& document)
{
    std::ofstream out = open_output(path);
    out << document.dump(2) << '\n';
    finish_output(out, path);
}

shapes::MeshData load_session_mesh(const SessionDocument& session, const fs::path& base_dir)
{
    shapes::MeshData mesh;
    if (session.inline_mesh) {
        mesh = *session.inline_mesh;
    } else {
        if (!session.mesh_path || session.mesh_path->empty()) fail(ErrorCode::SchemaError, "/mesh/path: missing");
        fs::path p = *session.mesh_path;
        if (p.is_relative()) p = base_dir / p;
        mesh = session.mesh_format ? read_mesh(p, *session.mesh_format) : read_mesh(p);
        if (session.kind != SessionKind::cloth && session.kind != SessionKind::tet) mesh = drop_flat_z(std::move(mesh));
    }
    const MeshKind expected = mesh_kind(session.kind);
    if (mesh.kind != expected) {
        fail(ErrorCode::SchemaError, "/kind: mesh elements do not match kind '" + kind_name(session.kind) + "'");
    }
    const Eigen::Index arity = expected == MeshKind::polyline ? 2 : (expected == MeshKind::triangle ? 3 : 4);
    if (mesh.elements.rows() > 0 && mesh.elements.cols() != arity) {
        fail(ErrorCode::SchemaError, "/mesh/elements: expected " + std::to_string(arity) + " indices per element");
    }
    if (mesh.elements.rows() == 0) mesh.elements.resize(0, arity);
    if (session.kind == SessionKind::cloth && mesh.vertices.cols() != 3) {
        fail(ErrorCode::SchemaError, "/mesh/vertices: cloth needs 3D vertices");
    }
    return mesh;
}

std::shared_ptr<const RestMesh> build_session_mesh(const SessionDocument& session, const fs::path& base_dir)
{
    shapes::MeshData data = load_session_mesh(session, base_dir);
    return std::make_shared<const RestMesh>(build_rest_mesh(std::move(data.vertices), std::move(data.elements), data.kind));
}

TrajectoryDocument parse_trajectory(const json& doc)
{
    require_object(doc, "");
    check_keys(doc, {"version", "session", "keyframes", "interpolation", "frame_rate", "reset_rest_each_step"}, "");
    check_version(doc);
    TrajectoryDocument t;
    const json& session = require(doc, "session", "");
    if (session.is_string()) {
        t.session_path = session.get<std::string>();
    } else {
        t.inline_session = parse_session_at(session, "/session");
    }
    if (const json* interp = find(doc, "interpolation")) {
        if (as_string(*interp, "/interpolation") != "linear") schema_error("/interpolation", "only 'linear' is supported");
    }
    if (const json* rate = find(doc, "frame_rate")) t.frame_rate = positive(as_number(*rate, "/frame_rate"), "/frame_rate");
    if (const json* reset = find(doc, "reset_rest_each_step")) t.reset_rest_each_step = as_bool(*reset, "/reset_rest_each_step");
    t.keyframes = parse_keyframes(require(doc, "keyframes", ""), "/keyframes");
    return t;
}

TrajectoryDocument read_trajectory(const fs::path& path)
{
    return parse_trajectory(parse_json_file(path));
}

json trajectory_to_json(const TrajectoryDocument& t)
{
    json doc;
    doc["version"] = t.version;
    if (t.inline_session) doc["session"] = session_to_json(*t.inline_session);
    else doc["session"] = t.session_path.value_or("");
    doc["interpolation"] = "linear";
    doc["frame_rate"] = t.frame_rate;
    doc["reset_rest_each_step"] = t.reset_rest_each_step;
    json frames = json::array();
    for (const Keyframe& f : t.keyframes) frames.push_back({{"time", f.time}, {"handles", handles_to_json(f.handles)}});
    doc["keyframes"] = frames;
    return doc;
}

std::map<int, Eigen::VectorXd> sample_trajectory(const TrajectoryDocument& t, double time)
{
    if (t.keyframes.empty()) fail(ErrorCode::InvalidArgument, "trajectory has no keyframes");
    if (time <= t.keyframes.front().time) return t.keyframes.front().handles;
    if (time >= t.keyframes.back().time) return t.keyframes.back().handles;
    const auto next = std::upper_bound(t.keyframes.begin(), t.keyframes.end(), time,
                                       [](double value, const Keyframe& f) { return value < f.time; });
    const Keyframe& b = *next;
    const Keyframe& a = *(next - 1);
    const double alpha = (time - a.time) / (b.time - a.time);
    std::map<int, Eigen::VectorXd> out;
    for (const auto& [v, pa] : a.handles) {
        const Eigen::VectorXd& pb = b.handles.at(v);
        if (pa.size() != pb.size()) fail(ErrorCode::ShapeMismatch, "keyframe targets differ in dimension");
        out[v] = (1.0 - alpha) * pa + alpha * pb;
    }
    return out;
}

json params_to_json(const SolverParams& p)
{
    json j;
    j["material"] = material_to_json(p.material);
    j["locality"] = {{"w", p.locality.w}, {"s", p.locality.s}, {"regularizer", regularizer_name(p.locality.regularizer)}};
    j["rho"] = p.rho ? json(*p.rho) : json(nullptr);
    j["gamma"] = p.gamma ? json(*p.gamma) : json(nullptr);
    j["max_iters"] = p.max_iters;
    j["tol_primal"] = p.tol_primal;
    j["tol_dual"] = p.tol_dual;
    j["iters_per_frame"] = p.iters_per_frame;
    j["threads"] = p.threads;
    return j;
}

json residuals_to_json(const IterationResiduals& r)
{
    return {{"primal_z", r.primal_z}, {"dual_z", r.dual_z}, {"primal_x", r.primal_x}};
}

json solve_report(const DeformResult& result, const SolverParams& params, const RestMesh& mesh)
{
    json j;
    j["version"] = kDocumentVersion;
    j["command"] = "solve";
    j["converged"] = result.converged;
    j["iterations"] = result.iterations;
    j["total_iterations"] = result.total_iterations;
    j["wall_time"] = result.wall_time;
    j["timings"] = {{"local_x", result.timings.local_x},
                    {"local_z", result.timings.local_z},
                    {"global", result.timings.global},
                    {"dual", result.timings.dual}};
    j["factorizations"] = result.factorizations;
    j["final_residuals"] = residuals_to_json(result.residuals);
    json history = json::array();
    for (const IterationResiduals& r : result.history) history.push_back(residuals_to_json(r));
    j["residuals"] = history;
    const double max_disp = result.stats.magnitudes.size() ? result.stats.magnitudes.maxCoeff() : 0.0;
    j["roi"] = {{"threshold", result.roi_threshold},
                {"count", result.stats.roi_count},
                {"measure", result.stats.roi_measure},
                {"max_displacement", max_disp}};
    std::string kind = mesh.kind() == MeshKind::polyline ? "polyline" : (mesh.kind() == MeshKind::tet ? "tet" : "triangle");
    j["mesh"] = {{"kind", kind},
                 {"vertices", mesh.num_vertices()},
                 {"elements", mesh.num_elements()},
                 {"embed", mesh.embed()},
                 {"bbox_diagonal", mesh.bbox_diagonal()}};
    j["params"] = params_to_json(params);
    return j;
}

} // namespace localdeform::io

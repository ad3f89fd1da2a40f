#include <fstream>
#include <sstream>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"
#include "dsmpc/qp.hpp"

namespace dsmpc {

namespace {

void write_sparse(std::ostream& out, const char* name, const SparseMatrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    for (Eigen::Index c = 0; c < m.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m, c); it; ++it)
            out << it.row() << ' ' << it.col() << ' ' << format_double(it.value()) << '\n';
}

void write_vector(std::ostream& out, const char* name, const Eigen::VectorXd& v) {
    out << name << ' ' << v.size() << '\n';
    for (Eigen::Index k = 0; k < v.size(); ++k) out << format_double(v(k)) << '\n';
}

void expect(std::istream& in, const std::string& name, const std::string& path) {
    std::string token;
    if (!(in >> token) || token != name) throw IoError(path + ": expected section '" + name + "'");
}

SparseMatrix read_sparse(std::istream& in, const std::string& name, const std::string& path) {
    expect(in, name, path);
    Eigen::Index rows = 0, cols = 0, nnz = 0;
    if (!(in >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) throw IoError(path + ": bad header for " + name);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nnz));
    for (Eigen::Index k = 0; k < nnz; ++k) {
        Eigen::Index r = 0, c = 0;
        double v = 0.0;
        if (!(in >> r >> c >> v) || r < 0 || r >= rows || c < 0 || c >= cols)
            throw IoError(path + ": bad triplet in " + name);
        trip.emplace_back(r, c, v);
    }
    SparseMatrix m(rows, cols);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

Eigen::VectorXd read_vector(std::istream& in, const std::string& name, const std::string& path) {
    expect(in, name, path);
    Eigen::Index size = 0;
    if (!(in >> size) || size < 0) throw IoError(path + ": bad header for " + name);
    Eigen::VectorXd v(size);
    for (Eigen::Index k = 0; k < size; ++k)
        if (!(in >> v(k))) throw IoError(path + ": truncated " + name);
    return v;
}

}  // namespace

void write_qp(const QpProblem& qp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "dsmpc-qp 1\n";
    out << "constant " << format_double(qp.constant) << '\n';
    write_sparse(out, "H", qp.H);
    write_vector(out, "f", qp.f);
    write_sparse(out, "A_eq", qp.A_eq);
    write_vector(out, "b_eq", qp.b_eq);
    write_sparse(out, "C", qp.C);
    write_vector(out, "d", qp.d);
    out << "agents " << qp.agents << '\n';
    out << "variables " << qp.variables.size() << '\n';
    for (const auto& v : qp.variables)
        out << v.agent << ' ' << static_cast<int>(v.kind) << ' ' << v.step << ' ' << v.component << '\n';
    for (const auto* rows : {&qp.eq_rows, &qp.in_rows}) {
        out << (rows == &qp.eq_rows ? "eq_rows " : "in_rows ") << rows->size() << '\n';
        for (const auto& r : *rows)
            out << r.agent << ' ' << static_cast<int>(r.kind) << ' ' << r.step << ' ' << r.index << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

QpProblem read_qp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "dsmpc-qp" || version != 1) throw IoError(path + ": not a QP file");
    QpProblem qp;
    expect(in, "constant", path);
    if (!(in >> qp.constant)) throw IoError(path + ": bad constant");
    qp.H = read_sparse(in, "H", path);
    qp.f = read_vector(in, "f", path);
    qp.A_eq = read_sparse(in, "A_eq", path);
    qp.b_eq = read_vector(in, "b_eq", path);
    qp.C = read_sparse(in, "C", path);
    qp.d = read_vector(in, "d", path);
    std::string token;
    if (in >> token) {
        if (token != "agents" || !(in >> qp.agents)) throw IoError(path + ": bad agents section");
        std::size_t count = 0;
        expect(in, "variables", path);
        in >> count;
        qp.variables.resize(count);
        for (auto& v : qp.variables) {
            int kind = 0;
            if (!(in >> v.agent >> kind >> v.step >> v.component)) throw IoError(path + ": truncated variables");
            v.kind = static_cast<VariableKind>(kind);
        }
        for (auto* rows : {&qp.eq_rows, &qp.in_rows}) {
            expect(in, rows == &qp.eq_rows ? "eq_rows" : "in_rows", path);
            in >> count;
            rows->resize(count);
            for (auto& r : *rows) {
                int kind = 0;
                if (!(in >> r.agent >> kind >> r.step >> r.index)) throw IoError(path + ": truncated rows");
                r.kind = static_cast<RowKind>(kind);
            }
        }
    }
    qp.check_dimensions();
    return qp;
}

}  // namespace dsmpc

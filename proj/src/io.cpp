#include "dmdbench/io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "dmdbench/error.hpp"

namespace dmdbench {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& file, const std::string& content) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + file.string() + "' for writing");
    out << content;
    if (!out) throw Error("write failed for '" + file.string() + "'");
}

void write_trajectories_csv(const TrajectorySet& set, const fs::path& csv) {
    std::ostringstream os;
    const int d = set.trajectories.empty() ? 0 : static_cast<int>(set.trajectories.front().rows());
    os << "trial,step";
    for (int i = 0; i < d; ++i) os << ",y" << i;
    os << '\n';
    for (int t = 0; t < set.count(); ++t) {
        const MatrixXd& y = set.trajectories[t];
        for (Eigen::Index k = 0; k < y.cols(); ++k) {
            os << t << ',' << k;
            for (Eigen::Index i = 0; i < y.rows(); ++i) os << ',' << format_double(y(i, k));
            os << '\n';
        }
    }
    write_text(csv, os.str());
}

nlohmann::json trajectory_provenance(const TrajectorySet& set) {
    nlohmann::json j;
    j["system"] = set.system_id;
    j["observable"] = set.observable_id;
    j["noise"] = {{"system_sigma", set.noise.system_sigma},
                  {"measurement_sigma", set.noise.measurement_sigma},
                  {"seed", set.noise.seed}};
    j["trajectories"] = set.count();
    j["length"] = set.trajectories.empty() ? 0 : set.trajectories.front().cols();
    j["dimension"] = set.trajectories.empty() ? 0 : set.trajectories.front().rows();
    return j;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("cannot parse number '" + s + "' in " + where);
    }
}

}  // namespace

std::vector<MatrixXd> read_trajectories_csv(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw Error("cannot open '" + csv.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw EmptyData("empty trajectory file");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "trial" || header[1] != "step")
        throw Error("trajectory CSV header must start with trial,step");
    const std::size_t d = header.size() - 2;

    std::vector<long long> order;
    std::map<long long, std::map<long long, VectorXd>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        const std::string where = csv.string() + ":" + std::to_string(lineno);
        if (cells.size() != header.size()) throw DimensionMismatch("wrong column count at " + where);
        const auto trial = static_cast<long long>(parse_double(cells[0], where));
        const auto step = static_cast<long long>(parse_double(cells[1], where));
        VectorXd y(static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i) y(static_cast<Eigen::Index>(i)) = parse_double(cells[i + 2], where);
        if (!rows.count(trial)) order.push_back(trial);
        rows[trial][step] = std::move(y);
    }
    std::vector<MatrixXd> out;
    for (long long t : order) {
        const auto& steps = rows[t];
        MatrixXd m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(steps.size()));
        Eigen::Index k = 0;
        for (const auto& [step, y] : steps) m.col(k++) = y;
        out.push_back(std::move(m));
    }
    if (out.empty()) throw EmptyData("trajectory file has no rows");
    return out;
}

nlohmann::json model_to_json(const DmdModel& model) {
    nlohmann::json j;
    auto pairs = [](const auto& values) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Complex& v : values) arr.push_back({v.real(), v.imag()});
        return arr;
    };
    j["algorithm"] = to_string(model.algorithm);
    j["rank"] = model.rank;
    j["eigenvalues"] = pairs(model.eigenvalues);
    j["modes"] = {{"rows", model.modes.rows()},
                  {"cols", model.modes.cols()},
                  {"column_major", pairs(std::vector<Complex>(model.modes.data(), model.modes.data() + model.modes.size()))}};
    j["amplitudes"] = pairs(std::vector<Complex>(model.amplitudes.data(), model.amplitudes.data() + model.amplitudes.size()));
    j["condition_number"] = model.kappa_est;
    j["flags"] = {{"conjugate_closed", model.conjugate_closed},
                  {"converged", model.converged},
                  {"iterations", model.iterations}};
    return j;
}

void write_density_csv(const DensityGrid& grid, const fs::path& csv) {
    std::ostringstream os;
    os << "re,im,density\n";
    const int n = grid.geometry().cells;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double dens = grid.density(i, j);
            if (dens <= 0.0) continue;
            os << format_double(grid.re_at(i)) << ',' << format_double(grid.im_at(j)) << ',' << format_double(dens)
               << '\n';
        }
    write_text(csv, os.str());
}

nlohmann::json density_metadata(const DensityGrid& grid, const ComplexList& truth) {
    const GridGeometry& g = grid.geometry();
    nlohmann::json j;
    j["re_range"] = {g.re_min, g.re_max};
    j["im_range"] = {g.im_min, g.im_max};
    j["cells"] = g.cells;
    j["resolution"] = {g.re_step(), g.im_step()};
    j["sigma"] = g.sigma;
    j["sample_count"] = grid.sample_count();
    j["clipped_count"] = grid.clipped_count();
    j["sparse"] = true;
    nlohmann::json t = nlohmann::json::array();
    for (const Complex& v : truth) t.push_back({v.real(), v.imag()});
    j["truth"] = t;
    return j;
}

void write_binstats_csv(const std::vector<BinStatsRow>& rows, const fs::path& csv) {
    std::ostringstream os;
    os << kBinStatsHeader << '\n';
    for (const auto& r : rows) {
        const BinStats& s = r.stats;
        os << r.preset_id << ',' << r.bin_id << ',' << format_double(s.truth.real()) << ','
           << format_double(s.truth.imag()) << ',' << format_double(s.mean.real()) << ','
           << format_double(s.mean.imag()) << ',' << format_double(s.std) << ',' << format_double(s.discard_fraction)
           << ',' << format_double(r.kappa_a) << ',' << format_double(s.kappa_mean) << '\n';
    }
    write_text(csv, os.str());
}

std::vector<BinStatsRow> read_binstats_csv(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw Error("cannot open '" + csv.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kBinStatsHeader) throw Error("unexpected BinStats header in " + csv.string());
    std::vector<BinStatsRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto c = split_csv(line);
        const std::string where = csv.string() + ":" + std::to_string(lineno);
        if (c.size() != 10) throw DimensionMismatch("wrong column count at " + where);
        BinStatsRow r;
        r.preset_id = c[0];
        r.bin_id = static_cast<int>(parse_double(c[1], where));
        r.stats.truth = {parse_double(c[2], where), parse_double(c[3], where)};
        r.stats.mean = {parse_double(c[4], where), parse_double(c[5], where)};
        r.stats.std = parse_double(c[6], where);
        r.stats.discard_fraction = parse_double(c[7], where);
        r.kappa_a = parse_double(c[8], where);
        r.stats.kappa_mean = parse_double(c[9], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string sha256_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot open '" + file.string() + "' for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("SHA-256 initialization failed");
    }
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

}  // namespace dmdbench

#include "maskdl/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "maskdl/binary_io.hpp"

namespace maskdl {

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'M', 'S', 'K', 'D', 'L', 'C', 'K', '\n'};
constexpr std::array<char, 8> kMatrixMagic = {'M', 'S', 'K', 'D', 'L', 'M', 'X', '\n'};
constexpr std::uint64_t kCheckpointVersion = 1;

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void expect_magic(BinaryReader& in, const std::array<char, 8>& magic, const char* what) {
    std::array<char, 8> got{};
    in.bytes(got.data(), got.size());
    if (got != magic) throw DataError(std::string("not a ") + what + " file");
}

}  // namespace

std::string format_double(double value) {
    std::array<char, 64> buffer{};
    const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    return std::string(buffer.data(), ptr);
}

std::optional<double> parse_double(std::string_view text) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::string format_trajectory(const std::vector<TrajectoryRecord>& records, bool with_rmse) {
    std::string out = "t,epochs,cpu_time_s,surrogate,test_objective,l1_l2_ratio";
    if (with_rmse) out += ",rmse";
    out += '\n';
    for (const auto& r : records) {
        out += std::to_string(r.t);
        out += ',' + format_double(r.epochs);
        out += ',' + format_double(r.cpu_time_s);
        out += ',' + format_double(r.surrogate);
        out += ',' + (r.test_objective ? format_double(*r.test_objective) : std::string());
        out += ',' + format_double(r.l1_l2_ratio);
        if (with_rmse) out += ',' + (r.rmse ? format_double(*r.rmse) : std::string());
        out += '\n';
    }
    return out;
}

void write_trajectory(const std::string& path, const std::vector<TrajectoryRecord>& records, bool with_rmse) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write trajectory file '" + path + "'");
    out << format_trajectory(records, with_rmse);
    if (!out) throw DataError("failed writing trajectory file '" + path + "'");
}

std::vector<TrajectoryRecord> parse_trajectory(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("trajectory is empty");
    const auto header = split_commas(trim(line));
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
    for (const char* required : {"t", "epochs", "cpu_time_s", "surrogate"})
        if (!column.count(required)) throw DataError(std::string("trajectory lacks column '") + required + "'");

    std::vector<TrajectoryRecord> records;
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        line = trim(line);
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != header.size())
            throw DataError("trajectory line " + std::to_string(number) + ": wrong field count");
        auto number_at = [&](const std::string& name) -> std::optional<double> {
            const auto it = column.find(name);
            if (it == column.end() || fields[it->second].empty()) return std::nullopt;
            const auto v = parse_double(fields[it->second]);
            if (!v) throw DataError("trajectory line " + std::to_string(number) + ": bad value for " + name);
            return v;
        };
        TrajectoryRecord r;
        const auto& t_field = fields[column["t"]];
        std::int64_t t = 0;
        const auto [ptr, ec] = std::from_chars(t_field.data(), t_field.data() + t_field.size(), t);
        if (ec != std::errc() || ptr != t_field.data() + t_field.size())
            throw DataError("trajectory line " + std::to_string(number) + ": bad iteration");
        r.t = t;
        r.epochs = number_at("epochs").value_or(0.0);
        r.cpu_time_s = number_at("cpu_time_s").value_or(0.0);
        r.surrogate = number_at("surrogate").value_or(0.0);
        r.test_objective = number_at("test_objective");
        r.l1_l2_ratio = number_at("l1_l2_ratio").value_or(0.0);
        r.rmse = number_at("rmse");
        records.push_back(r);
    }
    return records;
}

std::vector<TrajectoryRecord> read_trajectory(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open trajectory file '" + path + "'");
    return parse_trajectory(std::string(std::istreambuf_iterator<char>(in), {}));
}

std::optional<double> convergence_time(const std::vector<double>& times, const std::vector<double>& scores,
                                       double tolerance) {
    if (times.size() != scores.size()) throw DataError("convergence_time: length mismatch");
    if (scores.empty()) return std::nullopt;
    const double final_score = scores.back();
    const double band = tolerance * std::abs(final_score);
    std::size_t entry = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (std::abs(scores[i] - final_score) > band) entry = i + 1;
    return times[entry];
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path + "'");
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_matrix(const std::string& path, const Matrix& m) {
    BinaryWriter out;
    out.bytes(kMatrixMagic.data(), kMatrixMagic.size());
    out.matrix(m);
    write_bytes(path, out.data());
}

Matrix read_matrix(const std::string& path) {
    BinaryReader in(read_bytes(path));
    expect_magic(in, kMatrixMagic, "matrix");
    Matrix m = in.matrix<Matrix>();
    if (!in.at_end()) throw DataError("trailing bytes in matrix file '" + path + "'");
    return m;
}

std::vector<std::uint8_t> encode_checkpoint(const Learner& learner, const std::string& run_config) {
    BinaryWriter out;
    out.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
    out.u64(kCheckpointVersion);
    out.string(run_config);
    learner.save(out);
    return out.data();
}

CheckpointHeader read_checkpoint_header(BinaryReader& reader) {
    expect_magic(reader, kCheckpointMagic, "checkpoint");
    CheckpointHeader h;
    h.version = reader.u64();
    if (h.version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(h.version));
    h.run_config = reader.string();
    return h;
}

KeyValues parse_key_values(const std::string& text) {
    KeyValues values;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
        values[key] = trim(line.substr(eq + 1));
    }
    return values;
}

KeyValues read_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_key_values(std::string(std::istreambuf_iterator<char>(in), {}));
}

std::string format_key_values(const KeyValues& values) {
    std::string out;
    for (const auto& [k, v] : values) out += k + "=" + v + "\n";
    return out;
}

}  // namespace maskdl

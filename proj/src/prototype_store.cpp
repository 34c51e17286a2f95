#include "protosel/prototype_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <unordered_set>

#include "protosel/error.hpp"

namespace protosel {

namespace {

constexpr std::array<char, 4> kMagic{'P', 'D', 'B', '1'};
constexpr std::uint32_t kFormatVersion = 1;

std::vector<ClassCode> make_registry(const std::vector<ClassCode>& classes) {
    std::vector<ClassCode> registry(classes);
    std::sort(registry.begin(), registry.end());
    registry.erase(std::unique(registry.begin(), registry.end()), registry.end());
    return registry;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

// Splits on commas into `fields`, reusing its storage.
void split_fields(std::string_view line, std::vector<std::string_view>& fields) {
    fields.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            return;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

double parse_double(std::string_view text, std::size_t line, std::size_t column) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (!text.empty() && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty()) {
        throw FormatError("non-numeric value '" + std::string(text) + "' in column " + std::to_string(column + 1),
                          line);
    }
    return value;
}

std::uint64_t parse_unsigned(std::string_view text, std::size_t line, const char* what) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw FormatError(std::string(what) + " must be a non-negative integer, got '" + std::string(text) + "'",
                          line);
    }
    return value;
}

class Fnv1a {
public:
    void update(const void* data, std::size_t size) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            hash_ ^= bytes[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t value() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class LittleEndianWriter {
public:
    explicit LittleEndianWriter(std::ostream& out) : out_(out) {}

    template <class T>
    void put(T value) {
        static_assert(std::is_integral_v<T>);
        std::array<unsigned char, sizeof(T)> bytes{};
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
        }
        write(bytes.data(), bytes.size());
    }
    void put_double(double value) { put(std::bit_cast<std::uint64_t>(value)); }

    void write(const void* data, std::size_t size) {
        hash_.update(data, size);
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    }
    std::uint64_t checksum() const { return hash_.value(); }

private:
    std::ostream& out_;
    Fnv1a hash_;
};

class LittleEndianReader {
public:
    explicit LittleEndianReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        static_assert(std::is_integral_v<T>);
        need(sizeof(T), what);
        std::uint64_t value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(value);
    }
    double get_double(const char* what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }

    std::span<const unsigned char> take(std::size_t size, const char* what) {
        need(size, what);
        auto out = bytes_.subspan(pos_, size);
        pos_ += size;
        return out;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t size, const char* what) const {
        if (bytes_.size() - pos_ < size) {
            throw LoadError(std::string("truncated database file while reading ") + what + " at byte " +
                            std::to_string(pos_));
        }
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Metric parse_metric(std::string_view name) {
    if (name == "l2" || name == "euclidean") {
        return Metric::l2;
    }
    throw ConfigError("unknown distance metric '" + std::string(name) + "'");
}

std::string_view metric_name(Metric metric) {
    switch (metric) {
        case Metric::l2:
            return "l2";
    }
    return "l2";
}

PrototypeDatabase::PrototypeDatabase(std::size_t dimension, std::vector<double> features,
                                     std::vector<ClassCode> classes, Metric metric)
    : dimension_(dimension), features_(std::move(features)), classes_(std::move(classes)), metric_(metric) {
    require(dimension_ >= 1, "database dimension must be at least 1");
    require(features_.size() == classes_.size() * dimension_, "feature count must equal rows * dimension");
    require(classes_.size() <= std::numeric_limits<PrototypeId>::max(), "too many prototypes for 32-bit ids");
    registry_ = make_registry(classes_);
}

std::size_t PrototypeDatabase::class_index(ClassCode code) const {
    const auto it = std::lower_bound(registry_.begin(), registry_.end(), code);
    require(it != registry_.end() && *it == code, "class code not in registry");
    return static_cast<std::size_t>(it - registry_.begin());
}

PrototypeDatabase PrototypeDatabase::subset(std::span<const PrototypeId> ids) const {
    std::vector<double> features;
    features.reserve(ids.size() * dimension_);
    std::vector<ClassCode> classes;
    classes.reserve(ids.size());
    for (const PrototypeId id : ids) {
        require(id < size(), "subset id out of range");
        const auto row = this->features(id);
        features.insert(features.end(), row.begin(), row.end());
        classes.push_back(classes_[id]);
    }
    return PrototypeDatabase(dimension_, std::move(features), std::move(classes), metric_);
}

PrototypeDatabase ingest_csv(std::istream& in, Metric metric) {
    std::string line;
    std::size_t line_number = 0;
    std::vector<std::string_view> fields;

    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_number;
        if (!trim(line).empty()) {
            have_header = true;
            break;
        }
    }
    if (!have_header) {
        throw EmptyInputError("empty prototype stream: no header");
    }
    std::string_view header = line;
    if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF &&
        static_cast<unsigned char>(header[1]) == 0xBB && static_cast<unsigned char>(header[2]) == 0xBF) {
        header.remove_prefix(3);
    }
    split_fields(header, fields);
    if (fields.size() < 3 || fields[0] != "id" || fields[1] != "class") {
        throw FormatError("header must be 'id,class,f0,...' with at least one feature column", line_number);
    }
    const std::size_t columns = fields.size();
    const std::size_t dimension = columns - 2;

    std::vector<double> features;
    std::vector<ClassCode> classes;
    std::unordered_set<std::uint64_t> seen_ids;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) {
            continue;
        }
        split_fields(line, fields);
        if (fields.size() != columns) {
            throw FormatError("expected " + std::to_string(columns) + " fields, found " +
                                  std::to_string(fields.size()),
                              line_number);
        }
        const std::uint64_t id = parse_unsigned(fields[0], line_number, "id");
        if (!seen_ids.insert(id).second) {
            throw FormatError("duplicate id " + std::to_string(id), line_number);
        }
        const std::uint64_t code = parse_unsigned(fields[1], line_number, "class");
        if (code > std::numeric_limits<ClassCode>::max()) {
            throw FormatError("class code out of range", line_number);
        }
        classes.push_back(static_cast<ClassCode>(code));
        for (std::size_t c = 2; c < columns; ++c) {
            features.push_back(parse_double(fields[c], line_number, c));
        }
    }
    if (classes.empty()) {
        throw EmptyInputError("empty prototype stream: header but no rows");
    }
    return PrototypeDatabase(dimension, std::move(features), std::move(classes), metric);
}

PrototypeDatabase ingest_csv(const std::filesystem::path& path, Metric metric) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    return ingest_csv(in, metric);
}

void write_csv(const PrototypeDatabase& db, std::span<const PrototypeId> ids, std::ostream& out) {
    out << "id,class";
    for (std::size_t j = 0; j < db.dimension(); ++j) {
        out << ",f" << j;
    }
    out << '\n';
    std::array<char, 64> buffer{};
    for (const PrototypeId id : ids) {
        out << id << ',' << db.class_of(id);
        for (const double v : db.features(id)) {
            const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), v);
            out << ',';
            out.write(buffer.data(), ptr - buffer.data());
        }
        out << '\n';
    }
}

void write_csv(const PrototypeDatabase& db, std::ostream& out) {
    std::vector<PrototypeId> ids(db.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = static_cast<PrototypeId>(i);
    }
    write_csv(db, ids, out);
}

// Layout: magic, u32 version, u32 metric length, metric bytes, u64 rows, u64 dimension,
// rows x u32 class codes, rows*dimension x f64 features, u64 FNV-1a of all preceding bytes.
void save(const PrototypeDatabase& db, std::ostream& out) {
    LittleEndianWriter w(out);
    w.write(kMagic.data(), kMagic.size());
    w.put<std::uint32_t>(kFormatVersion);
    const std::string_view metric = metric_name(db.metric());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(metric.size()));
    w.write(metric.data(), metric.size());
    w.put<std::uint64_t>(db.size());
    w.put<std::uint64_t>(db.dimension());
    for (const ClassCode c : db.classes()) {
        w.put<std::uint32_t>(c);
    }
    for (const double v : db.raw_features()) {
        w.put_double(v);
    }
    const std::uint64_t checksum = w.checksum();
    LittleEndianWriter tail(out);
    tail.put<std::uint64_t>(checksum);
    if (!out) {
        throw Error("failed writing database");
    }
}

void save(const PrototypeDatabase& db, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    save(db, out);
}

PrototypeDatabase load(std::istream& in) {
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    LittleEndianReader r(bytes);

    const auto magic = r.take(kMagic.size(), "magic");
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
        throw LoadError("bad magic bytes: not a PDB1 database");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kFormatVersion) {
        throw LoadError("unsupported database version " + std::to_string(version));
    }
    const auto metric_length = r.get<std::uint32_t>("metric length");
    if (metric_length > 64) {
        throw LoadError("implausible metric name length " + std::to_string(metric_length));
    }
    const auto metric_bytes = r.take(metric_length, "metric");
    const std::string metric_text(metric_bytes.begin(), metric_bytes.end());
    Metric metric{};
    try {
        metric = parse_metric(metric_text);
    } catch (const ConfigError& e) {
        throw LoadError(e.what());
    }
    const auto rows = r.get<std::uint64_t>("row count");
    const auto dimension = r.get<std::uint64_t>("dimension");
    if (dimension == 0) {
        throw LoadError("dimension must be at least 1");
    }
    const std::uint64_t expected = rows * 4 + rows * dimension * 8 + 8;
    if (rows > bytes.size() || dimension > bytes.size() || r.remaining() != expected) {
        throw LoadError("size mismatch: header declares " + std::to_string(rows) + " x " + std::to_string(dimension) +
                        " but " + std::to_string(r.remaining()) + " payload bytes remain (truncated or corrupt)");
    }
    std::vector<ClassCode> classes(rows);
    for (auto& c : classes) {
        c = r.get<std::uint32_t>("class codes");
    }
    std::vector<double> features(rows * dimension);
    for (auto& v : features) {
        v = r.get_double("features");
    }
    Fnv1a hash;
    hash.update(bytes.data(), r.position());
    const auto stored = r.get<std::uint64_t>("checksum");
    if (stored != hash.value()) {
        throw LoadError("checksum mismatch: database file is corrupt");
    }
    return PrototypeDatabase(dimension, std::move(features), std::move(classes), metric);
}

PrototypeDatabase load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    return load(in);
}

PrototypeDatabase read_database(const std::filesystem::path& path, Metric metric) {
    if (path.extension() == ".pdb") {
        return load(path);
    }
    return ingest_csv(path, metric);
}

}  // namespace protosel

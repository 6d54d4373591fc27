#include "secnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"
#include "secnn/optim.hpp"

namespace secnn {

using ojson = nlohmann::ordered_json;

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::InvalidConfig, m); };
    if (epochs < 1) bad("epochs must be >= 1");
    if (batch_size < 1) bad("batch-size must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) bad("lr must be positive");
    if (!(head_dropout >= 0.0 && head_dropout < 1.0)) bad("head-dropout must be in [0,1)");
    if (!(block_dropout >= 0.0 && block_dropout < 1.0)) bad("block-dropout must be in [0,1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) bad("weight-decay must be >= 0");
    if (base_channels < 1) bad("base-channels must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) bad("val-fraction must be in (0,1)");
    if (transfer && model == Architecture::custom_cnn) bad("--tl applies to resnet50/vgg16 only");
    const std::size_t min_side = model == Architecture::custom_cnn ? 8 : 32;
    if (resolution < min_side)
        bad("resolution " + std::to_string(resolution) + " below the " + std::string(to_string(model)) +
            " minimum of " + std::to_string(min_side));
    effective_augment().validate();
}

AugmentSpec TrainConfig::effective_augment() const {
    AugmentSpec s = augment;
    s.height = s.width = resolution;
    return s;
}

namespace {

ojson config_json(const TrainConfig& c) {
    ojson j;
    j["model"] = std::string(to_string(c.model));
    j["tl"] = c.transfer;
    j["epochs"] = c.epochs;
    j["batch-size"] = c.batch_size;
    j["lr"] = c.lr;
    j["head-dropout"] = c.head_dropout;
    j["weight-decay"] = c.weight_decay;
    j["block-dropout"] = c.block_dropout;
    j["base-channels"] = c.base_channels;
    j["seed"] = c.seed;
    j["resolution"] = c.resolution;
    j["augment"] = c.augment_enabled;
    j["hflip-prob"] = c.augment.hflip_prob;
    j["rotation"] = c.augment.rotation_degrees;
    j["brightness"] = c.augment.brightness;
    j["contrast"] = c.augment.contrast;
    j["saturation"] = c.augment.saturation;
    j["mean"] = c.augment.mean;
    j["std"] = c.augment.std;
    j["val-fraction"] = c.val_fraction;
    j["deterministic"] = c.deterministic;
    return j;
}

template <class T>
T get_as(const ojson& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw std::invalid_argument("expected a number");
        }
        return v.get<T>();
    } catch (const std::exception& e) {
        fail(ErrorKind::InvalidConfig, "config key '" + key + "': " + e.what());
    }
}

TrainConfig config_from(const ojson& j, TrainConfig c) {
    if (!j.is_object()) fail(ErrorKind::InvalidConfig, "config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "model") {
            const auto name = get_as<std::string>(v, key);
            const auto arch = parse_architecture(name);
            if (!arch) fail(ErrorKind::InvalidConfig, "unknown model '" + name + "'");
            c.model = *arch;
        } else if (key == "tl") c.transfer = get_as<bool>(v, key);
        else if (key == "epochs") c.epochs = get_as<std::size_t>(v, key);
        else if (key == "batch-size") c.batch_size = get_as<std::size_t>(v, key);
        else if (key == "lr") c.lr = get_as<double>(v, key);
        else if (key == "head-dropout") c.head_dropout = get_as<double>(v, key);
        else if (key == "weight-decay") c.weight_decay = get_as<double>(v, key);
        else if (key == "block-dropout") c.block_dropout = get_as<double>(v, key);
        else if (key == "base-channels") c.base_channels = get_as<std::size_t>(v, key);
        else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
        else if (key == "resolution") c.resolution = get_as<std::size_t>(v, key);
        else if (key == "augment") c.augment_enabled = get_as<bool>(v, key);
        else if (key == "hflip-prob") c.augment.hflip_prob = get_as<double>(v, key);
        else if (key == "rotation") c.augment.rotation_degrees = get_as<double>(v, key);
        else if (key == "brightness") c.augment.brightness = get_as<double>(v, key);
        else if (key == "contrast") c.augment.contrast = get_as<double>(v, key);
        else if (key == "saturation") c.augment.saturation = get_as<double>(v, key);
        else if (key == "mean" || key == "std") {
            if (!v.is_array() || v.size() != 3) fail(ErrorKind::InvalidConfig, "config key '" + key + "': expected 3 numbers");
            auto& dst = key == "mean" ? c.augment.mean : c.augment.std;
            for (std::size_t i = 0; i < 3; ++i) dst[i] = get_as<double>(v[i], key);
        } else if (key == "val-fraction") c.val_fraction = get_as<double>(v, key);
        else if (key == "deterministic") c.deterministic = get_as<bool>(v, key);
        else fail(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
    }
    return c;
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(2); }

TrainConfig config_from_json(const std::string& json, TrainConfig base) {
    ojson j;
    try {
        j = ojson::parse(json);
    } catch (const ojson::parse_error& e) {
        fail(ErrorKind::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
    return config_from(j, std::move(base));
}

// ---- checkpoint container ----------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'E', 'C', 'N', 'N', 'C', 'K', 'P'};

template <class U>
void put(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U take(std::istream& in, const char* what) {
    unsigned char b[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(U)))
        fail(ErrorKind::CorruptCheckpoint, std::string("checkpoint truncated in ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

ojson manifest_json(const Checkpoint& c) {
    ojson j;
    j["format"] = "secnn-checkpoint";
    j["version"] = Checkpoint::kVersion;
    j["config"] = config_json(c.config);
    j["class_names"] = c.class_names;
    j["epoch"] = c.epoch;
    j["val_accuracy"] = c.val_accuracy;
    j["val_loss"] = c.val_loss;
    j["train_accuracy"] = c.train_accuracy;
    j["train_seconds"] = c.train_seconds ? ojson(*c.train_seconds) : ojson(nullptr);
    auto& ts = j["tensors"] = ojson::array();
    for (const auto& t : c.tensors)
        ts.push_back({{"name", t.name}, {"dtype", std::string(to_string(t.value.dtype()))}, {"shape", t.value.shape()}});
    return j;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, Checkpoint::kVersion);
    const std::string manifest = manifest_json(ckpt).dump(2);
    put<std::uint64_t>(out, manifest.size());
    out += manifest;
    put<std::uint64_t>(out, ckpt.tensors.size());
    std::ostringstream body;
    for (const auto& t : ckpt.tensors) {
        std::string head;
        put<std::uint32_t>(head, static_cast<std::uint32_t>(t.name.size()));
        head += t.name;
        body.write(head.data(), static_cast<std::streamsize>(head.size()));
        write_tensor(body, t.value);
    }
    out += body.str();
    return {out.begin(), out.end()};
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    auto corrupt = [](const std::string& m) { fail(ErrorKind::CorruptCheckpoint, m); };
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        corrupt("not a checkpoint (bad magic)");
    const auto version = take<std::uint32_t>(in, "header");
    if (version != Checkpoint::kVersion) corrupt("unsupported checkpoint version " + std::to_string(version));
    const auto mlen = take<std::uint64_t>(in, "header");
    if (mlen > bytes.size()) corrupt("manifest length exceeds file size");
    std::string manifest(mlen, '\0');
    if (!in.read(manifest.data(), static_cast<std::streamsize>(mlen))) corrupt("checkpoint truncated in manifest");

    Checkpoint c;
    std::vector<std::pair<std::string, Shape>> expected;
    std::vector<std::string> expected_dtype;
    try {
        const auto j = ojson::parse(manifest);
        if (j.at("format") != "secnn-checkpoint") corrupt("manifest format tag missing");
        c.config = config_from(j.at("config"), TrainConfig{});
        c.class_names = j.at("class_names").get<std::vector<std::string>>();
        c.epoch = j.at("epoch").get<std::size_t>();
        c.val_accuracy = j.at("val_accuracy").get<double>();
        c.val_loss = j.at("val_loss").get<double>();
        c.train_accuracy = j.at("train_accuracy").get<double>();
        if (!j.at("train_seconds").is_null()) c.train_seconds = j.at("train_seconds").get<double>();
        for (const auto& t : j.at("tensors")) {
            expected.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
            expected_dtype.push_back(t.at("dtype").get<std::string>());
        }
    } catch (const Error& e) {
        corrupt(std::string("bad manifest: ") + e.what());
    } catch (const std::exception& e) {
        corrupt(std::string("bad manifest: ") + e.what());
    }

    const auto count = take<std::uint64_t>(in, "tensor count");
    if (count != expected.size())
        corrupt("manifest lists " + std::to_string(expected.size()) + " tensors, blob has " + std::to_string(count));
    for (std::size_t i = 0; i < count; ++i) {
        const auto nlen = take<std::uint32_t>(in, "tensor name");
        if (nlen > 4096) corrupt("implausible tensor name length");
        std::string name(nlen, '\0');
        if (!in.read(name.data(), nlen)) corrupt("checkpoint truncated in tensor name");
        if (name != expected[i].first) corrupt("tensor " + std::to_string(i) + " is '" + name + "', manifest says '" +
                                               expected[i].first + "'");
        Tensor t = read_tensor(in);
        if (t.shape() != expected[i].second || to_string(t.dtype()) != expected_dtype[i])
            corrupt("tensor '" + name + "' disagrees with the manifest");
        c.tensors.push_back({std::move(name), std::move(t)});
    }
    if (in.peek() != std::char_traits<char>::eof()) corrupt("trailing bytes after the last tensor");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoFailure, "cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

// ---- models ------------------------------------------------------------------

namespace {

ModelGraph build_structure(const TrainConfig& config, std::size_t num_classes) {
    switch (config.model) {
        case Architecture::custom_cnn: {
            CustomCnnConfig c;
            c.base_channels = config.base_channels;
            c.num_classes = num_classes;
            c.head_dropout = config.head_dropout;
            c.block_dropout = config.block_dropout;
            return build_custom_cnn(c);
        }
        case Architecture::resnet50:
        case Architecture::vgg16: {
            ModelGraph m = config.model == Architecture::resnet50 ? build_resnet50(num_classes) : build_vgg16(num_classes);
            if (config.transfer) freeze_for_transfer(m, config.head_dropout);
            else set_head_dropout(m, config.head_dropout);
            return m;
        }
    }
    fail(ErrorKind::UnsupportedModel, "unknown architecture");
}

}  // namespace

ModelGraph build_model(const TrainConfig& config, std::size_t num_classes) {
    ModelGraph m = build_structure(config, num_classes);
    kaiming_init(m, mix_seed(config.seed, 0x1417));
    return m;
}

std::vector<NamedTensor> snapshot(const ModelGraph& model) {
    std::vector<NamedTensor> out;
    for (const Parameter* p : model.parameters()) out.push_back({p->name(), p->value().clone()});
    for (const Buffer* b : model.buffers()) out.push_back({b->name(), b->value().clone()});
    return out;
}

void load_weights(ModelGraph& model, const std::vector<NamedTensor>& tensors) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& t : tensors)
        if (!by_name.emplace(t.name, &t.value).second)
            fail(ErrorKind::CorruptCheckpoint, "duplicate tensor '" + t.name + "'");
    if (by_name.size() != model.parameters().size() + model.buffers().size())
        fail(ErrorKind::CorruptCheckpoint, "checkpoint holds " + std::to_string(by_name.size()) +
                                               " tensors, the model expects " +
                                               std::to_string(model.parameters().size() + model.buffers().size()));
    const DType dt = tensors.empty() ? DType::f32 : tensors.front().value.dtype();
    if (model.materialized()) model.convert(dt);
    else model.materialize(dt);
    auto lookup = [&](const std::string& name, const Shape& shape) -> const Tensor& {
        auto it = by_name.find(name);
        if (it == by_name.end()) fail(ErrorKind::CorruptCheckpoint, "checkpoint lacks '" + name + "'");
        if (it->second->shape() != shape)
            fail(ErrorKind::CorruptCheckpoint, "'" + name + "' has shape " + shape_str(it->second->shape()) +
                                                   ", model expects " + shape_str(shape));
        if (it->second->dtype() != dt) fail(ErrorKind::CorruptCheckpoint, "mixed dtypes in checkpoint");
        return *it->second;
    };
    for (Parameter* p : model.parameters()) p->assign(lookup(p->name(), p->shape()).clone());
    for (Buffer* b : model.buffers()) b->assign(lookup(b->name(), b->shape()).clone());
}

ModelGraph model_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.class_names.empty()) fail(ErrorKind::CorruptCheckpoint, "checkpoint has no classes");
    ModelGraph m = build_structure(ckpt.config, ckpt.class_names.size());
    load_weights(m, ckpt.tensors);
    return m;
}

// ---- fit ---------------------------------------------------------------------

std::size_t best_epoch_index(const std::vector<EpochRecord>& records) {
    if (records.empty()) fail(ErrorKind::EmptyInput, "no epoch records");
    std::size_t best = 0;
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].val_acc > records[best].val_acc) best = i;
    return best;
}

TrainingDiverged::TrainingDiverged(const std::string& message, FitResult partial)
    : Error(ErrorKind::DivergedLoss, message), partial_(std::move(partial)) {}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    const auto pred = argmax_rows(logits);
    std::size_t c = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) c += pred[i] == labels[i];
    return c;
}

struct PassStats {
    double loss = 0.0;
    double acc = 0.0;
};

PassStats validation_pass(ModelGraph& model, const DatasetIndex& index, const AugmentSpec& spec, std::size_t batch) {
    BatchOptions o;
    o.batch_size = batch;
    o.shuffle = false;
    BatchStream stream(index, Split::val, spec, o);
    double loss = 0.0;
    std::size_t correct = 0, n = 0;
    Batch b;
    while (stream.next(b)) {
        const Tensor logits = model.logits(b.images);
        loss += cross_entropy(logits, b.labels).loss * static_cast<double>(b.labels.size());
        correct += count_correct(logits, b.labels);
        n += b.labels.size();
    }
    return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

}  // namespace

FitResult fit(const TrainConfig& config, const DatasetIndex& index, const FitHooks& hooks) {
    config.validate();
    ModelGraph model = build_model(config, index.num_classes());
    return fit(model, config, index, hooks);
}

FitResult fit(ModelGraph& model, const TrainConfig& config, const DatasetIndex& index, const FitHooks& hooks) {
    config.validate();
    if (index.num_classes() != model.num_classes())
        fail(ErrorKind::ClassMismatch, "model has " + std::to_string(model.num_classes()) + " classes, dataset has " +
                                           std::to_string(index.num_classes()));
    const AugmentSpec spec = config.effective_augment();
    // Surface empty splits before any work is done.
    if (index.count(Split::train) == 0) fail(ErrorKind::EmptySplit, "training split is empty");
    if (index.count(Split::val) == 0) fail(ErrorKind::EmptySplit, "validation split is empty");

    AdamConfig ac;
    ac.lr = config.lr;
    ac.weight_decay = config.weight_decay;
    Adam opt(model.parameters(), ac);

    FitResult res;
    res.best.config = config;
    res.best.class_names = index.classes;
    bool have_best = false;
    auto take_best = [&](const EpochRecord& r) {
        res.best.epoch = r.epoch;
        res.best.val_accuracy = r.val_acc;
        res.best.val_loss = r.val_loss;
        res.best.train_accuracy = r.train_acc;
        res.best.tensors = snapshot(model);
        have_best = true;
    };

    const auto start = Clock::now();
    std::size_t steps = 0;
    bool stop = false;
    for (std::size_t e = 0; e < config.epochs && !stop; ++e) {
        const auto t0 = Clock::now();
        BatchOptions o;
        o.batch_size = config.batch_size;
        o.shuffle = true;
        o.seed = config.seed;
        o.epoch = e;
        o.augment = config.augment_enabled;
        BatchStream stream(index, Split::train, spec, o);
        std::mt19937_64 drop_rng(mix_seed(mix_seed(config.seed, e), 3));

        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        Batch b;
        while (stream.next(b)) {
            Tape tape;
            opt.zero_grad();
            const Var logits = model.forward(tape, b.images, Mode::train, drop_rng);
            const Var loss = ops::cross_entropy(logits, b.labels);
            const double l = loss.value().item();
            if (!std::isfinite(l)) {
                res.total_seconds = seconds_since(start);
                if (!have_best) res.best.tensors = snapshot(model);
                throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(e + 1) + ", step " +
                                           std::to_string(steps + 1),
                                       std::move(res));
            }
            correct += count_correct(logits.value(), b.labels);
            tape.backward(loss);
            opt.step();
            loss_sum += l * static_cast<double>(b.labels.size());
            seen += b.labels.size();
            ++steps;
            if (hooks.on_step) hooks.on_step(steps, model);
            if (hooks.max_steps && steps >= hooks.max_steps) {
                stop = true;
                break;
            }
        }
        if (stop && seen < stream.size()) break;  // partial epoch: no record

        const PassStats val = validation_pass(model, index, spec, config.batch_size);
        EpochRecord r;
        r.epoch = e + 1;
        r.train_loss = loss_sum / static_cast<double>(seen);
        r.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        r.val_loss = val.loss;
        r.val_acc = val.acc;
        r.seconds = seconds_since(t0);
        res.records.push_back(r);
        if (!have_best || r.val_acc > res.best.val_accuracy) take_best(r);
        if (hooks.on_epoch) hooks.on_epoch(r);
    }
    res.total_seconds = seconds_since(start);
    if (!have_best) res.best.tensors = snapshot(model);
    if (!config.deterministic) res.best.train_seconds = res.total_seconds;
    return res;
}

// ---- evaluation -------------------------------------------------------------

EvalReport evaluate(const Checkpoint& ckpt, const DatasetIndex& index, Split split) {
    if (ckpt.class_names != index.classes) {
        std::string msg = "checkpoint classes (" + std::to_string(ckpt.class_names.size()) +
                          ") differ from dataset classes (" + std::to_string(index.num_classes()) + ")";
        fail(ErrorKind::ClassMismatch, msg);
    }
    ModelGraph model = model_from_checkpoint(ckpt);
    const Predictions p = predict(model, index, split, ckpt.config.effective_augment(), ckpt.config.batch_size);
    EvalReport r;
    r.report = evaluate_predictions(p, index.num_classes());
    r.class_names = index.classes;
    r.model = ckpt.config.model;
    r.transfer = ckpt.config.transfer;
    r.params = param_count(model);
    r.size_mb = size_mb(model);
    r.train_seconds = ckpt.train_seconds;
    r.best_epoch = ckpt.epoch;
    const auto probs = p.probabilities.to_vector();
    const std::size_t k = index.num_classes();
    double loss = 0.0;
    for (std::size_t i = 0; i < p.labels.size(); ++i)
        loss -= std::log(std::max(probs[i * k + static_cast<std::size_t>(p.labels[i])], 1e-300));
    r.loss = p.labels.empty() ? 0.0 : loss / static_cast<double>(p.labels.size());
    return r;
}

std::string eval_report_to_json(const EvalReport& r) {
    ojson j;
    j["model"] = std::string(to_string(r.model));
    j["transfer"] = r.transfer;
    j["classes"] = r.class_names;
    j["best_epoch"] = r.best_epoch;
    j["loss"] = r.loss;
    j["param_count"] = {{"total", r.params.total}, {"trainable", r.params.trainable}};
    j["size_mb"] = r.size_mb;
    j["train_seconds"] = r.train_seconds ? ojson(*r.train_seconds) : ojson(nullptr);
    j["metrics"] = ojson::parse(report_to_json(r.report, r.class_names));
    return j.dump(2);
}

std::string format_eval_report(const EvalReport& r) {
    std::ostringstream os;
    os << "model: " << to_string(r.model) << (r.transfer ? " (transfer)" : "") << '\n'
       << "best epoch: " << r.best_epoch << '\n'
       << "params: " << r.params.total << " total, " << r.params.trainable << " trainable\n"
       << "size (MB): " << std::fixed << std::setprecision(2) << r.size_mb << '\n'
       << "train time (s): ";
    if (r.train_seconds) os << std::setprecision(1) << *r.train_seconds << '\n';
    else os << "not recorded\n";
    os << std::setprecision(4) << "loss: " << r.loss << '\n' << format_report(r.report, r.class_names);
    return os.str();
}

// ---- curves ------------------------------------------------------------------

void export_curves(const std::vector<EpochRecord>& records, const std::filesystem::path& path, bool zero_seconds) {
    if (records.empty()) fail(ErrorKind::EmptyInput, "no epoch records to export");
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    out << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n" << std::fixed << std::setprecision(6);
    for (const auto& r : records)
        out << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_loss << ',' << r.val_acc << ','
            << (zero_seconds ? 0.0 : r.seconds) << '\n';
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

std::vector<EpochRecord> read_curves(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "epoch,train_loss,train_acc,val_loss,val_acc,seconds")
        fail(ErrorKind::IoFailure, "unexpected curves header in " + path.string());
    std::vector<EpochRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        EpochRecord r;
        if (!(row >> r.epoch >> r.train_loss >> r.train_acc >> r.val_loss >> r.val_acc >> r.seconds))
            fail(ErrorKind::IoFailure, "malformed curves row: " + line);
        out.push_back(r);
    }
    return out;
}

}  // namespace secnn

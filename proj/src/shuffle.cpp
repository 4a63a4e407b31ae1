#include "anonlab/shuffle.hpp"

#include <algorithm>
#include <map>

namespace anonlab::shuffle {

Bytes pad_slot(const Bytes& message, size_t slot_size, Rng& rng) {
    if (message.size() > slot_size)
        throw std::invalid_argument("message exceeds slot size");
    Bytes out;
    out.reserve(2 + slot_size);
    out.push_back(uint8_t(message.size() & 0xff));
    out.push_back(uint8_t(message.size() >> 8));
    out.insert(out.end(), message.begin(), message.end());
    for (size_t i = message.size(); i < slot_size; ++i)
        out.push_back(uint8_t(rng.next_u64() & 0xff));
    return out;
}

Bytes unpad_slot(const Bytes& padded) {
    if (padded.size() < 2) throw std::invalid_argument("bad padded slot");
    size_t len = size_t(padded[0]) | size_t(padded[1]) << 8;
    if (len > padded.size() - 2) throw std::invalid_argument("bad slot length field");
    return Bytes(padded.begin() + 2, padded.begin() + 2 + ptrdiff_t(len));
}

Submission submit(const CipherSuite& suite, const ShuffleConfig& config,
                  const Bytes& message, Rng& client_rng) {
    if (config.shufflers.empty()) throw std::invalid_argument("no shufflers");
    Submission s;
    s.padded = pad_slot(message, config.slot_size, client_rng);
    // Innermost layer for the last shuffler, then outward in reverse order.
    Bytes ct = s.padded;
    for (size_t i = config.shufflers.size(); i-- > 0;)
        ct = suite.encrypt(config.shufflers[i].public_part, ct);
    s.ciphertext = std::move(ct);
    return s;
}

ShuffleBatch shuffle_step(const CipherSuite& suite, const KeyPair& shuffler,
                          const ShuffleBatch& batch, Rng& rng) {
    if (batch.layers_remaining == 0)
        throw std::invalid_argument("no layers remaining");
    if (batch.items.size() != batch.expected_count)
        throw std::invalid_argument("shuffle_step: missing items");
    ShuffleBatch out;
    out.layers_remaining = batch.layers_remaining - 1;
    out.expected_count = batch.expected_count;
    out.round = batch.round;
    out.items.reserve(batch.items.size());
    for (const Bytes& item : batch.items)
        out.items.push_back(suite.decrypt(shuffler.private_part, item));
    // The permutation stays local to this call; nothing downstream sees it.
    std::vector<size_t> perm = rng.permutation(out.items.size());
    std::vector<Bytes> shuffled(out.items.size());
    for (size_t i = 0; i < perm.size(); ++i) shuffled[perm[i]] = std::move(out.items[i]);
    out.items = std::move(shuffled);
    return out;
}

Verdict verify(const Bytes& my_padded, const std::vector<Bytes>& outputs) {
    size_t count = 0;
    for (const Bytes& o : outputs)
        if (o == my_padded) ++count;
    if (count == 0) return Verdict::Dropped;
    if (count > 1) return Verdict::Duplicated;
    return Verdict::Ok;
}

namespace {

void apply_input_tamper(std::vector<Bytes>& items, const TamperSpec& t, Rng& rng) {
    if (t.item_index >= items.size()) throw std::invalid_argument("tamper index");
    switch (t.action) {
        case TamperAction::Drop:
            items.erase(items.begin() + ptrdiff_t(t.item_index));
            break;
        case TamperAction::Duplicate: {
            // Replace some other item with a copy of the target, keeping the
            // batch size unchanged.
            size_t victim = rng.uniform(items.size());
            if (victim == t.item_index) victim = (victim + 1) % items.size();
            items[victim] = items[t.item_index];
            break;
        }
        case TamperAction::ModifyCiphertext:
            items[t.item_index][items[t.item_index].size() / 2] ^= 0x01;
            break;
        case TamperAction::ModifyCleartext:
            break; // handled on the output side
    }
}

} // namespace

CascadeResult run_cascade(const CipherSuite& suite, const ShuffleConfig& config,
                          const std::vector<Submission>& submissions, Rng& rng,
                          const std::optional<TamperSpec>& tamper) {
    if (submissions.size() != config.client_count)
        throw std::invalid_argument("run_cascade: expected all client submissions");

    CascadeResult result;
    for (const Submission& s : submissions)
        result.transcript.inputs.push_back(s.ciphertext);

    ShuffleBatch batch;
    batch.layers_remaining = config.shufflers.size();
    batch.expected_count = submissions.size();
    for (const Submission& s : submissions) batch.items.push_back(s.ciphertext);

    for (size_t i = 0; i < config.shufflers.size(); ++i) {
        Rng step_rng = rng.fork(i);
        if (tamper && tamper->shuffler_index == i &&
            tamper->action != TamperAction::ModifyCleartext) {
            apply_input_tamper(batch.items, *tamper, step_rng);
            batch.expected_count = batch.items.size();
        }
        try {
            batch = shuffle_step(suite, config.shufflers[i], batch, step_rng);
        } catch (const DecryptError&) {
            result.status = CascadeStatus::DecryptAbort;
            result.verdicts.assign(submissions.size(), Verdict::Dropped);
            return result;
        }
        if (tamper && tamper->shuffler_index == i &&
            tamper->action == TamperAction::ModifyCleartext) {
            size_t idx = tamper->item_index % batch.items.size();
            batch.items[idx][batch.items[idx].size() / 2] ^= 0x01;
        }
    }

    result.transcript.outputs = batch.items;
    std::sort(result.transcript.outputs.begin(), result.transcript.outputs.end());

    bool all_ok = true;
    for (const Submission& s : submissions) {
        Verdict v = verify(s.padded, batch.items);
        result.verdicts.push_back(v);
        if (v != Verdict::Ok) all_ok = false;
    }
    if (!all_ok) {
        result.status = CascadeStatus::ComplaintAbort;
        return result;
    }
    result.status = CascadeStatus::Released;
    for (const Bytes& item : result.transcript.outputs)
        result.released.push_back(unpad_slot(item));
    return result;
}

} // namespace anonlab::shuffle
